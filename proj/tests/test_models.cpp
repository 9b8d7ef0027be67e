#include <doctest.h>

#include <cmath>
#include <map>

#include "dsrvae/nn/networks.hpp"
#include "dsrvae/resize.hpp"
#include "dsrvae/degrade.hpp"
#include "support.hpp"

using namespace dsrvae;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double amp = 0.5) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.v) v = amp * (2.0 * rng.uniform() - 1.0);
  return t;
}

}  // namespace

TEST_CASE("sample_latent: pinned algebra") {
  LatentDistribution<double> d;
  d.mean = {0.3, -0.2};
  d.log_variance = {0.0, 0.0};
  std::vector<double> eps0 = {0.0, 0.0};
  CHECK(sample_latent(d, &eps0, 0) == d.mean);

  LatentDistribution<double> std_normal;
  std_normal.mean = {0.0, 0.0, 0.0};
  std_normal.log_variance = {0.0, 0.0, 0.0};
  std::vector<double> e = {0.7, -1.1, 2.0};
  CHECK(sample_latent(std_normal, &e, 0) == e);

  LatentDistribution<double> wide;
  wide.mean = {1.0};
  wide.log_variance = {std::log(4.0)};
  std::vector<double> one = {1.0};
  CHECK(sample_latent(wide, &one, 0)[0] == doctest::Approx(3.0).epsilon(1e-12));

  std::vector<double> bad = {1.0, 2.0};
  CHECK_THROWS(sample_latent(wide, &bad, 0));
}

TEST_CASE("sample_latent: reparameterization statistics over 10000 draws") {
  LatentDistribution<double> d;
  d.mean = {0.5, -1.0, 0.0, 2.0};
  d.log_variance = {0.0, std::log(0.25), std::log(4.0), std::log(0.5)};
  const int n = 10000;
  std::vector<double> sum(4, 0.0), sumsq(4, 0.0);
  for (int i = 0; i < n; ++i) {
    auto z = sample_latent<double>(d, nullptr, 1000 + static_cast<std::uint64_t>(i));
    for (int j = 0; j < 4; ++j) {
      sum[j] += z[j];
      sumsq[j] += z[j] * z[j];
    }
  }
  for (int j = 0; j < 4; ++j) {
    const double m = sum[j] / n;
    const double var = sumsq[j] / n - m * m;
    const double sd = std::exp(0.5 * d.log_variance[j]);
    CHECK(std::abs(m - d.mean[j]) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - sd * sd) < 0.1 * sd * sd);
  }
  // seeded determinism
  CHECK(sample_latent<double>(d, nullptr, 42) == sample_latent<double>(d, nullptr, 42));
}

TEST_CASE("encode: shape contract, zero heads, non-collapse") {
  ModelConfig cfg = ModelConfig::desk();
  auto ps = init_parameters<double>(cfg, 1, false);
  Rng rng(2);
  Tensor<double> a = random_tensor({3, 32, 32}, rng);
  Tensor<double> b = random_tensor({3, 32, 32}, rng);
  EncoderCache<double> ec;
  auto da = encode(ps, cfg, a, ec);
  CHECK(static_cast<int>(da.mean.size()) == cfg.latent_len);
  CHECK(static_cast<int>(da.log_variance.size()) == cfg.latent_len);

  auto db = encode(ps, cfg, b, ec);
  CHECK(da.mean != db.mean);

  // zeroed heads emit the standard normal
  ps.at("encoder.mean.w").value.fill(0.0);
  ps.at("encoder.mean.b").value.fill(0.0);
  ps.at("encoder.logvar.w").value.fill(0.0);
  ps.at("encoder.logvar.b").value.fill(0.0);
  auto dz = encode(ps, cfg, a, ec);
  for (double v : dz.mean) CHECK(v == 0.0);
  for (double v : dz.log_variance) CHECK(v == 0.0);

  Tensor<double> tiny({3, 8, 8});
  CHECK_THROWS(encode(ps, cfg, tiny, ec));
}

TEST_CASE("decoder: shape contract, zero-init identity, z wiring") {
  ModelConfig cfg = ModelConfig::desk();
  Rng rng(3);
  Tensor<double> noisy = random_tensor({3, 32, 32}, rng);

  // identity start: zero noise estimate, denoise is the identity
  auto ps0 = init_parameters<double>(cfg, 4, true);
  std::vector<double> z(cfg.latent_len, 0.1);
  DecoderCache<double> dc;
  auto est = decode_noise(ps0, cfg, noisy, z, dc);
  CHECK(est.same_shape(noisy));
  for (double v : est.v) CHECK(v == 0.0);
  auto den = denoise(ps0, cfg, noisy, z, dc);
  CHECK(den.v == noisy.v);

  // algebraic identity: denoise + decode_noise reconstructs noisy bit-exactly
  auto ps = init_parameters<double>(cfg, 5, false);
  auto est2 = decode_noise(ps, cfg, noisy, z, dc);
  auto den2 = denoise(ps, cfg, noisy, z, dc);
  for (std::size_t i = 0; i < noisy.size(); ++i)
    CHECK(den2.v[i] == noisy.v[i] - est2.v[i]);

  // finite-difference probe: z is wired in
  auto out_sum = [&](const std::vector<double>& zz) {
    DecoderCache<double> c;
    auto o = decode_noise(ps, cfg, noisy, zz, c);
    double s = 0.0;
    for (double v : o.v) s += v;
    return s;
  };
  const double h = 1e-5;
  bool any_nonzero = false;
  for (int k = 0; k < 5; ++k) {
    std::vector<double> zp = z, zm = z;
    zp[k] += h;
    zm[k] -= h;
    if (std::abs((out_sum(zp) - out_sum(zm)) / (2 * h)) > 1e-6) any_nonzero = true;
  }
  CHECK(any_nonzero);

  Tensor<double> odd({3, 30, 30});
  CHECK_THROWS(decode_noise(ps, cfg, odd, z, dc));
}

TEST_CASE("denoise_inference: deterministic modes, consistent code paths") {
  ModelConfig cfg = ModelConfig::desk();
  auto ps = init_parameters<double>(cfg, 6, false);
  Rng rng(7);
  Tensor<double> noisy = random_tensor({3, 32, 32}, rng);

  auto a = denoise_inference(ps, cfg, noisy);
  auto b = denoise_inference(ps, cfg, noisy);
  CHECK(a.v == b.v);

  auto s1 = denoise_inference(ps, cfg, noisy, InferenceLatent::prior_sample, 9);
  auto s2 = denoise_inference(ps, cfg, noisy, InferenceLatent::prior_sample, 9);
  CHECK(s1.v == s2.v);
  CHECK(s1.v != a.v);

  // prior-mean equals the explicit z = 0 path
  std::vector<double> z0(cfg.latent_len, 0.0);
  DecoderCache<double> dc;
  CHECK(a.v == denoise(ps, cfg, noisy, z0, dc).v);
}

TEST_CASE("srsn/super_resolve: shapes and zero-init identity") {
  ModelConfig cfg = ModelConfig::desk();
  auto ps = init_parameters<double>(cfg, 8, true);
  Rng rng(9);
  Tensor<double> lr = random_tensor({3, 16, 16}, rng);

  auto sr = super_resolve(ps, cfg, lr, 4);
  REQUIRE(sr.dim(0) == 3);
  REQUIRE(sr.dim(1) == 64);
  REQUIRE(sr.dim(2) == 64);

  // zero-init SRSN output conv: result equals bicubic upsample exactly
  auto bic = bicubic_resize_chw(lr, 64, 64, false);
  CHECK(sr.v == bic.v);

  // alpha = 1 with zero weights: identity
  auto same = super_resolve(ps, cfg, lr, 1);
  CHECK(same.v == lr.v);
  CHECK_THROWS(super_resolve(ps, cfg, lr, 0));
}

TEST_CASE("shape algebra: super_resolve undoes degrade's downsample dims") {
  ModelConfig cfg = ModelConfig::desk();
  auto ps = init_parameters<double>(cfg, 10, true);
  auto img = testsupport::make_synthetic_image(67, 70, 11).cast<double>();
  DegradationSpec spec{0.0, 4, 0.0, 0};
  auto cropped = center_crop_to_multiple(img, 4);
  auto lr = degrade(img, spec);
  auto sr = super_resolve(ps, cfg, image_to_tensor(lr), 4);
  CHECK(sr.dim(1) == cropped.height);
  CHECK(sr.dim(2) == cropped.width);
}

TEST_CASE("discriminate: range, zeroed logit, input gradient probe") {
  ModelConfig cfg = ModelConfig::desk();
  auto ps = init_parameters<double>(cfg, 12, false);
  Rng rng(13);
  Tensor<double> patch = random_tensor({3, 32, 32}, rng);
  DiscCache<double> dc;
  const double p = discriminate(ps, cfg, patch, dc);
  CHECK(p > 0.0);
  CHECK(p < 1.0);

  // finite-difference probe on the input
  auto prob_of = [&](const Tensor<double>& x) {
    DiscCache<double> c;
    return discriminate(ps, cfg, x, c);
  };
  bool any = false;
  for (int k = 0; k < 8; ++k) {
    Tensor<double> xp = patch, xm = patch;
    const std::size_t idx = rng.uniform_int(patch.size());
    xp.v[idx] += 1e-5;
    xm.v[idx] -= 1e-5;
    if (std::abs(prob_of(xp) - prob_of(xm)) / 2e-5 > 1e-8) any = true;
  }
  CHECK(any);

  ps.at("disc.fc.w").value.fill(0.0);
  ps.at("disc.fc.b").value.fill(0.0);
  CHECK(discriminate(ps, cfg, patch, dc) == 0.5);

  Tensor<double> small({3, 16, 16});
  CHECK_THROWS(discriminate(ps, cfg, small, dc));
}

TEST_CASE("extract_features: shape, determinism, non-degeneracy, frozen seed") {
  ModelConfig cfg = ModelConfig::desk();
  auto ps = init_parameters<double>(cfg, 14, true);
  Rng rng(15);
  Tensor<double> img = random_tensor({3, 32, 48}, rng);
  FeatCache<double> fc;
  auto f1 = extract_features(ps, img, fc);
  CHECK(f1.dim(0) == 32);
  CHECK(f1.dim(1) == 2);   // 32/16
  CHECK(f1.dim(2) == 3);   // 48/16
  auto f2 = extract_features(ps, img, fc);
  CHECK(f1.v == f2.v);

  Tensor<double> other = random_tensor({3, 32, 48}, rng);
  auto f3 = extract_features(ps, other, fc);
  double dist = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) dist += std::abs(f1.v[i] - f3.v[i]);
  CHECK(dist > 0.0);

  // the extractor weights do not depend on the run seed
  auto ps2 = init_parameters<double>(cfg, 999, true);
  for (int i = 0; i < 4; ++i) {
    const std::string n = "features.stage" + std::to_string(i) + ".w";
    CHECK(ps.at(n).value.v == ps2.at(n).value.v);
  }

  Tensor<double> small({3, 8, 8});
  CHECK_THROWS(extract_features(ps, small, fc));
}

TEST_CASE("parameter counts: exact hand-computed values for the default config") {
  ModelConfig cfg;  // full-scale defaults
  auto ps = init_parameters<float>(cfg, 0, true);
  std::map<std::string, std::size_t> per_owner;
  for (const auto& p : ps.items()) per_owner[p.owner] += p.value.size();
  CHECK(per_owner["encoder"] == 372928u);
  CHECK(per_owner["decoder"] == 1822787u);
  CHECK(per_owner["srsn"] == 298947u);
  CHECK(per_owner["discriminator"] == 1569089u);
  CHECK(per_owner["features"] == 23584u);
  CHECK(ps.total_count() == 4087335u);
}

TEST_CASE("init: deterministic in seed, names unique") {
  ModelConfig cfg = ModelConfig::desk();
  auto a = init_parameters<float>(cfg, 21, true);
  auto b = init_parameters<float>(cfg, 21, true);
  REQUIRE(a.items().size() == b.items().size());
  for (std::size_t i = 0; i < a.items().size(); ++i) {
    CHECK(a.items()[i].name == b.items()[i].name);
    CHECK(a.items()[i].value.v == b.items()[i].value.v);
  }
  auto c = init_parameters<float>(cfg, 22, true);
  CHECK(a.items()[0].value.v != c.items()[0].value.v);
}
