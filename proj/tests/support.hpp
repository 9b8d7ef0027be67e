#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "dsrvae/image.hpp"
#include "dsrvae/rng.hpp"

namespace testsupport {

// Procedural photographic stand-in: smooth low-frequency ramps plus a few
// soft blobs and mild texture, per-channel, clamped to [0,1].
inline dsrvae::BasicImage<float> make_synthetic_image(int h, int w,
                                                      std::uint64_t seed) {
  dsrvae::Rng rng(seed);
  dsrvae::BasicImage<float> img(h, w);
  double fx[3], fy[3], ph[3], amp[3], base[3];
  struct Blob {
    double cy, cx, r, a;
    int c;
  };
  std::vector<Blob> blobs;
  for (int c = 0; c < 3; ++c) {
    fx[c] = 1.0 + 3.0 * rng.uniform();
    fy[c] = 1.0 + 3.0 * rng.uniform();
    ph[c] = 6.2831853 * rng.uniform();
    amp[c] = 0.12 + 0.1 * rng.uniform();
    base[c] = 0.35 + 0.3 * rng.uniform();
  }
  const int nblobs = 4 + static_cast<int>(rng.uniform_int(4));
  for (int i = 0; i < nblobs; ++i)
    blobs.push_back({rng.uniform() * h, rng.uniform() * w,
                     0.08 * std::min(h, w) * (0.5 + rng.uniform()),
                     0.35 * (rng.uniform() - 0.3),
                     static_cast<int>(rng.uniform_int(3))});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = static_cast<double>(x) / w;
        const double v = static_cast<double>(y) / h;
        double val = base[c] + amp[c] * std::sin(6.2831853 * (fx[c] * u + fy[c] * v) +
                                                 ph[c]) +
                     0.1 * u - 0.05 * v;
        for (const Blob& b : blobs)
          if (b.c == c) {
            const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
            val += b.a * std::exp(-d2 / (2.0 * b.r * b.r));
          }
        img.at(c, y, x) = static_cast<float>(std::clamp(val, 0.05, 0.95));
      }
  return img;
}

// Writes `n` synthetic PNGs (img_00.png ...) into `dir`.
inline void write_synthetic_corpus(const std::string& dir, int n, int h, int w,
                                   std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%02d.png", i);
    dsrvae::save_image(make_synthetic_image(h, w, dsrvae::hash_combine(seed, i)),
                       dir + "/" + name);
  }
}

inline std::string temp_dir(const std::string& tag) {
  const std::string d =
      (std::filesystem::temp_directory_path() / ("dsrvae_test_" + tag)).string();
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace testsupport
