#include <doctest.h>

#include <cmath>

#include "dsrvae/degrade.hpp"
#include "dsrvae/resize.hpp"
#include "support.hpp"

using namespace dsrvae;

TEST_CASE("blur: sigma 0 is the identity and constants are preserved") {
  auto img = testsupport::make_synthetic_image(16, 16, 1).cast<double>();
  auto same = gaussian_blur(img, 0.0);
  CHECK(same.v == img.v);

  BasicImage<double> c(10, 12);
  for (auto& v : c.v) v = 0.42;
  auto bc = gaussian_blur(c, 2.3);
  for (double v : bc.v) CHECK(std::abs(v - 0.42) < 1e-12);

  CHECK_THROWS(gaussian_blur(img, -0.5));
}

TEST_CASE("blur: impulse response matches direct 2-D summation oracle") {
  const double sigma = 1.0;
  const int n = 21;
  BasicImage<double> img(n, n);
  img.at(0, n / 2, n / 2) = 1.0;
  img.at(1, n / 2, n / 2) = 1.0;
  img.at(2, n / 2, n / 2) = 1.0;
  auto blurred = gaussian_blur(img, sigma);

  // direct 2-D evaluation of the normalized truncated kernel
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i)
    norm += std::exp(-0.5 * i * i / (sigma * sigma));
  auto k1 = [&](int i) { return std::exp(-0.5 * i * i / (sigma * sigma)) / norm; };
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      CHECK(std::abs(blurred.at(0, n / 2 + dy, n / 2 + dx) - k1(dy) * k1(dx)) < 1e-9);
}

TEST_CASE("noise: statistics match sigma within tolerance") {
  BasicImage<double> zero(256, 256);
  const double sigma = 15.0 / 255.0;
  auto noisy = add_gaussian_noise(zero, sigma, 99);
  double mean = 0.0;
  for (double v : noisy.v) mean += v;
  mean /= static_cast<double>(noisy.v.size());
  double var = 0.0;
  for (double v : noisy.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(noisy.v.size() - 1);
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::abs(std::sqrt(var) - sigma) < 0.05 * sigma);
}

TEST_CASE("noise: deterministic in seed, unclamped, independent of signal") {
  auto img = testsupport::make_synthetic_image(64, 64, 2).cast<double>();
  auto a = add_gaussian_noise(img, 0.1, 1234);
  auto b = add_gaussian_noise(img, 0.1, 1234);
  CHECK(a.v == b.v);
  auto c = add_gaussian_noise(img, 0.1, 1235);
  CHECK(a.v != c.v);

  // sigma 0 identity
  CHECK(add_gaussian_noise(img, 0.0, 7).v == img.v);

  // bright image + noise can exceed 1 (no clamping)
  BasicImage<double> bright(32, 32);
  for (auto& v : bright.v) v = 1.0;
  auto bn = add_gaussian_noise(bright, 0.2, 5);
  CHECK(*std::max_element(bn.v.begin(), bn.v.end()) > 1.0);

  // noise-signal correlation near zero
  auto noisy = add_gaussian_noise(img, 0.1, 77);
  double ms = 0.0, mn = 0.0;
  const std::size_t n = img.v.size();
  std::vector<double> noise(n);
  for (std::size_t i = 0; i < n; ++i) {
    noise[i] = noisy.v[i] - img.v[i];
    ms += img.v[i];
    mn += noise[i];
  }
  ms /= n;
  mn /= n;
  double cov = 0.0, vs = 0.0, vn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (img.v[i] - ms) * (noise[i] - mn);
    vs += (img.v[i] - ms) * (img.v[i] - ms);
    vn += (noise[i] - mn) * (noise[i] - mn);
  }
  CHECK(std::abs(cov / std::sqrt(vs * vn)) < 0.05);
}

TEST_CASE("degrade: identity spec, reduction to resize, compositional oracle") {
  auto img = testsupport::make_synthetic_image(128, 128, 3).cast<double>();

  DegradationSpec id{0.0, 1, 0.0, 0};
  CHECK(degrade(img, id).v == img.v);

  DegradationSpec down{0.0, 4, 0.0, 0};
  auto got = degrade(img, down);
  REQUIRE(got.height == 32);
  REQUIRE(got.width == 32);
  auto want = bicubic_resize_to(img, 32, 32, true);
  CHECK(got.v == want.v);

  // full composition equals the hand-chained pipeline bit-for-bit
  DegradationSpec full{1.2, 2, 0.05, 31};
  auto a = degrade(img, full);
  auto b = add_gaussian_noise(
      bicubic_resize_to(gaussian_blur(img, 1.2), 64, 64, true), 0.05, 31);
  CHECK(a.v == b.v);

  // determinism across calls
  CHECK(degrade(img, full).v == a.v);
}

TEST_CASE("degrade: center-crops non-divisible inputs") {
  auto img = testsupport::make_synthetic_image(65, 67, 4).cast<double>();
  DegradationSpec spec{0.0, 4, 0.0, 0};
  auto out = degrade(img, spec);
  CHECK(out.height == 16);
  CHECK(out.width == 16);
  CHECK_THROWS(degrade(testsupport::make_synthetic_image(3, 3, 1).cast<double>(),
                       spec));
}

TEST_CASE("degrade: output stays within a sane range for in-range input") {
  auto img = testsupport::make_synthetic_image(64, 64, 5).cast<double>();
  DegradationSpec spec{0.8, 2, 25.0 / 255.0, 9};
  auto out = degrade(img, spec);
  for (double v : out.v) {
    CHECK(v > -0.2);
    CHECK(v < 1.2);
  }
}

TEST_CASE("center_crop_to_multiple bookkeeping") {
  auto img = testsupport::make_synthetic_image(37, 41, 6).cast<double>();
  auto out = center_crop_to_multiple(img, 16);
  REQUIRE(out.height == 32);
  REQUIRE(out.width == 32);
  // content matches the centered subarray
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        CHECK(out.at(c, y, x) == img.at(c, y + 2, x + 4));
}
