#include <doctest.h>

#include <cmath>

#include "dsrvae/metrics.hpp"
#include "support.hpp"

using namespace dsrvae;

TEST_CASE("psnr: identical images hit the 100 dB cap") {
  auto img = testsupport::make_synthetic_image(32, 32, 1).cast<double>();
  CHECK(psnr(img, img, PsnrChannel::luma) == 100.0);
  CHECK(psnr(img, img, PsnrChannel::rgb) == 100.0);
}

TEST_CASE("psnr: 0.1 constant offset gives exactly 20 dB in rgb mode") {
  BasicImage<double> a(16, 16), b(16, 16);
  for (auto& v : a.v) v = 0.4;
  for (auto& v : b.v) v = 0.5;
  CHECK(std::abs(psnr(a, b, PsnrChannel::rgb) - 20.0) < 1e-9);
  // luma of a constant offset is the same offset (coefficients sum to 1)
  CHECK(std::abs(psnr(a, b, PsnrChannel::luma) - 20.0) < 1e-9);
}

TEST_CASE("psnr: symmetry and error-scaling law") {
  auto ref = testsupport::make_synthetic_image(48, 48, 2).cast<double>();
  Rng rng(3);
  BasicImage<double> err(48, 48);
  for (auto& v : err.v) v = 0.02 * (rng.uniform() - 0.5);

  auto perturbed = [&](double k) {
    BasicImage<double> out = ref;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += k * err.v[i];
    return out;
  };
  auto p1 = perturbed(1.0);
  CHECK(psnr(ref, p1) == psnr(p1, ref));
  CHECK(psnr(ref, p1, PsnrChannel::rgb) == psnr(p1, ref, PsnrChannel::rgb));

  for (double k : {1.5, 2.0, 3.0}) {
    const double drop = psnr(ref, p1, PsnrChannel::rgb) -
                        psnr(ref, perturbed(k), PsnrChannel::rgb);
    CHECK(std::abs(drop - 20.0 * std::log10(k)) < 1e-6);
  }
  CHECK_THROWS(psnr(ref, BasicImage<double>(4, 4)));
}

TEST_CASE("ssim: self-similarity, symmetry, constant closed form") {
  auto img = testsupport::make_synthetic_image(32, 32, 4).cast<double>();
  CHECK(std::abs(ssim(img, img) - 1.0) < 1e-9);

  auto other = testsupport::make_synthetic_image(32, 32, 5).cast<double>();
  CHECK(ssim(img, other) == doctest::Approx(ssim(other, img)).epsilon(1e-12));

  // constant images: variances vanish, value reduces to the luminance term
  BasicImage<double> a(16, 16), b(16, 16);
  for (auto& v : a.v) v = 0.3;
  for (auto& v : b.v) v = 0.7;
  const double c1 = 0.01 * 0.01;
  const double want = (2.0 * 0.3 * 0.7 + c1) / (0.3 * 0.3 + 0.7 * 0.7 + c1);
  CHECK(std::abs(ssim(a, b) - want) < 1e-9);
}

TEST_CASE("ssim: independent random pairs score low, range respected") {
  for (int t = 0; t < 100; ++t) {
    Rng rng(1000 + t);
    BasicImage<double> a(48, 48), b(48, 48);
    for (auto& v : a.v) v = rng.uniform();
    for (auto& v : b.v) v = rng.uniform();
    const double s = ssim(a, b);
    CHECK(s < 0.2);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS(ssim(BasicImage<double>(8, 8), BasicImage<double>(8, 8)));  // < 11
}

TEST_CASE("ssim range over random structured pairs") {
  for (int t = 0; t < 1000; ++t) {
    Rng rng(5000 + t);
    BasicImage<double> a(12, 12), b(12, 12);
    for (auto& v : a.v) v = rng.uniform();
    b = a;
    for (auto& v : b.v) v += 0.3 * (rng.uniform() - 0.5);
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("evaluate_pairs: means equal the average of rows") {
  auto a1 = testsupport::make_synthetic_image(32, 32, 6).cast<double>();
  auto a2 = testsupport::make_synthetic_image(32, 32, 7).cast<double>();
  auto b1 = testsupport::make_synthetic_image(32, 32, 8).cast<double>();
  auto b2 = testsupport::make_synthetic_image(32, 32, 9).cast<double>();
  auto rep = evaluate_pairs<double>({{"x", {a1, b1}}, {"y", {a2, b2}}});
  REQUIRE(rep.rows.size() == 2);
  CHECK(std::abs(rep.mean_psnr_y - 0.5 * (rep.rows[0].psnr_y + rep.rows[1].psnr_y)) <
        1e-9);
  CHECK(std::abs(rep.mean_ssim - 0.5 * (rep.rows[0].ssim + rep.rows[1].ssim)) < 1e-9);
  CHECK(std::abs(rep.mean_psnr_rgb -
                 0.5 * (rep.rows[0].psnr_rgb + rep.rows[1].psnr_rgb)) < 1e-9);
  CHECK_THROWS(evaluate_pairs<double>({}));
}

TEST_CASE("metrics clamp out-of-range inputs at entry") {
  BasicImage<double> a(16, 16), b(16, 16);
  for (auto& v : a.v) v = 1.5;   // clamps to 1
  for (auto& v : b.v) v = 1.0;
  CHECK(psnr(a, b, PsnrChannel::rgb) == 100.0);
}
