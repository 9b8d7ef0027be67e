#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dsrvae/image.hpp"
#include "dsrvae/resize.hpp"
#include "dsrvae/rng.hpp"

namespace dsrvae {

// Synthetic degradation: blur kernel K, down-sampling operator s and
// additive noise, composed as X = sKY + noise.
struct DegradationSpec {
  double blur_sigma = 0.0;   // Gaussian std-dev in pixels; 0 = identity
  int scale = 1;             // integer down-sampling factor; 1 = identity
  double noise_sigma = 0.0;  // additive Gaussian std-dev on the [0,1] scale
  std::uint64_t seed = 0;
};

namespace detail {

template <class T>
std::vector<T> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  std::vector<T> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<T>(k[i] / sum);
  return out;
}

}  // namespace detail

// Separable Gaussian convolution, radius ceil(3*sigma), replicate border.
template <class T>
BasicImage<T> gaussian_blur(const BasicImage<T>& img, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: negative sigma");
  if (sigma == 0.0) return img;
  const auto kern = detail::gaussian_kernel<T>(sigma);
  const int radius = static_cast<int>(kern.size() / 2);
  const int h = img.height, w = img.width;
  BasicImage<T> tmp(h, w), out(h, w);
  for (int c = 0; c < 3; ++c) {
    // horizontal
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T acc = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int sx = std::clamp(x + k, 0, w - 1);
          acc += kern[k + radius] * img.at(c, y, sx);
        }
        tmp.at(c, y, x) = acc;
      }
    // vertical
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T acc = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int sy = std::clamp(y + k, 0, h - 1);
          acc += kern[k + radius] * tmp.at(c, sy, x);
        }
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

// i.i.d. Gaussian noise in [0,1] units; the result is NOT clamped.
template <class T>
BasicImage<T> add_gaussian_noise(const BasicImage<T>& img, double sigma,
                                 std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: negative sigma");
  if (sigma == 0.0) return img;
  BasicImage<T> out = img;
  Rng rng(seed);
  for (auto& x : out.v) x += static_cast<T>(sigma * rng.normal());
  return out;
}

// Center crop to the largest sub-image whose dims are multiples of `mult`.
template <class T>
BasicImage<T> center_crop_to_multiple(const BasicImage<T>& img, int mult) {
  const int h = (img.height / mult) * mult;
  const int w = (img.width / mult) * mult;
  if (h < 1 || w < 1)
    throw std::invalid_argument("image smaller than crop multiple");
  if (h == img.height && w == img.width) return img;
  const int y0 = (img.height - h) / 2;
  const int x0 = (img.width - w) / 2;
  BasicImage<T> out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

// X = sKY + noise: blur, bicubic down-sample with antialias, add noise.
template <class T>
BasicImage<T> degrade(const BasicImage<T>& img, const DegradationSpec& spec) {
  if (spec.scale < 1) throw std::invalid_argument("degrade: scale must be >= 1");
  BasicImage<T> y = center_crop_to_multiple(img, spec.scale);
  y = gaussian_blur(y, spec.blur_sigma);
  if (spec.scale > 1)
    y = bicubic_resize_to(y, y.height / spec.scale, y.width / spec.scale, true);
  return add_gaussian_noise(y, spec.noise_sigma, spec.seed);
}

}  // namespace dsrvae
