#include <doctest.h>

#include <cmath>
#include <functional>

#include "dsrvae/train.hpp"
#include "support.hpp"

using namespace dsrvae;

namespace {

// Tiny config: every network participates at minimal cost, all nonlinear
// paths active.
ModelConfig tiny() {
  ModelConfig c;
  c.latent_len = 6;
  c.srsn_blocks = 1;
  c.srsn_channels = 4;
  c.alpha = 2;
  c.decoder_resblocks = 1;
  c.decoder_channels = 4;
  c.encoder_channels = {4, 4, 4, 4};
  c.disc_base_channels = 2;
  return c;
}

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double amp = 0.4) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.v) v = amp * (2.0 * rng.uniform() - 1.0);
  return t;
}

// Move every parameter to a generic point. Zero-initialized biases put relu
// pre-activations exactly at the kink wherever the upstream receptive field
// is dead, and central differences are invalid there (they return the 0.5
// subgradient while the backward pass uses relu'(0) = 0).
void jitter_parameters(ParameterSet<double>& ps, std::uint64_t seed,
                       double amp = 0.05) {
  Rng rng(seed);
  for (auto& item : ps.items())
    for (auto& v : item.value.v) v += amp * (2.0 * rng.uniform() - 1.0);
}

// Central finite-difference check of d(loss)/d(param entry) against the
// analytic gradient accumulated by `backward`, over >= 20 entries spread
// across the arrays owned by `owners`.
void check_gradients(ParameterSet<double>& ps,
                     const std::vector<std::string>& owners,
                     const std::function<double(ParameterSet<double>&)>& loss_of,
                     const std::function<void(ParameterSet<double>&)>& backward,
                     int checks = 24, double h = 1e-7) {
  ps.zero_grads();
  backward(ps);

  std::vector<std::pair<std::size_t, std::size_t>> picks;  // (item idx, entry idx)
  Rng rng(0xfeedULL);
  std::vector<std::size_t> owned;
  for (std::size_t i = 0; i < ps.items().size(); ++i)
    if (std::find(owners.begin(), owners.end(), ps.items()[i].owner) != owners.end())
      owned.push_back(i);
  REQUIRE(!owned.empty());
  for (int k = 0; k < checks; ++k) {
    const std::size_t item = owned[k % owned.size()];
    picks.push_back({item, rng.uniform_int(ps.items()[item].value.size())});
  }

  int significant = 0;
  for (auto [item, entry] : picks) {
    auto& p = ps.items()[item];
    const double analytic = p.grad.v[entry];
    const double orig = p.value.v[entry];
    p.value.v[entry] = orig + h;
    const double lp = loss_of(ps);
    p.value.v[entry] = orig - h;
    const double lm = loss_of(ps);
    p.value.v[entry] = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    INFO("param " << p.name << "[" << entry << "] analytic=" << analytic
                  << " numeric=" << numeric);
    CHECK(std::abs(analytic - numeric) / denom < 1e-3);
    if (std::abs(numeric) > 1e-8) ++significant;
  }
  // guard against vacuously passing on an all-dead path
  CHECK(significant >= checks / 3);
}

}  // namespace

TEST_CASE("gradients: DAE objective (Eq. 7) through encoder and decoder") {
  ModelConfig cfg = tiny();
  auto ps = init_parameters<double>(cfg, 100, false);
  jitter_parameters(ps, 107);
  Rng rng(101);
  Tensor<double> noisy = random_tensor({3, 16, 16}, rng);
  Tensor<double> target = random_tensor({3, 16, 16}, rng);
  Tensor<double> encref = random_tensor({3, 16, 16}, rng);
  std::vector<double> eps(cfg.latent_len);
  for (auto& e : eps) e = rng.uniform() - 0.5;
  LossWeights<double> w;

  auto loss_of = [&](ParameterSet<double>& p) {
    ParameterSet<double> scratch = p;
    return static_cast<double>(
        dae_sample_backward(scratch, cfg, noisy, target, encref, eps, w, 1.0).total);
  };
  auto backward = [&](ParameterSet<double>& p) {
    dae_sample_backward(p, cfg, noisy, target, encref, eps, w, 1.0);
  };
  check_gradients(ps, {"encoder", "decoder"}, loss_of, backward);
}

TEST_CASE("gradients: cycle objective (Eq. 8) through SRSN and decoder") {
  ModelConfig cfg = tiny();
  auto ps = init_parameters<double>(cfg, 200, false);
  jitter_parameters(ps, 207);
  Rng rng(201);
  Tensor<double> x = random_tensor({3, 16, 16}, rng);
  LossWeights<double> w;
  w.lambda_feat = 0.0;
  w.eta_adv = 0.0;

  auto loss_of = [&](ParameterSet<double>& p) {
    ParameterSet<double> scratch = p;
    return static_cast<double>(
        generator_sample_backward(scratch, cfg, x, w, cfg.alpha, true, false, 1.0)
            .total);
  };
  auto backward = [&](ParameterSet<double>& p) {
    generator_sample_backward(p, cfg, x, w, cfg.alpha, true, false, 1.0);
  };
  check_gradients(ps, {"srsn", "decoder"}, loss_of, backward);
}

TEST_CASE("gradients: full generator objective (Eq. 9) incl. feature and adversarial") {
  ModelConfig cfg = tiny();
  auto ps = init_parameters<double>(cfg, 300, false);
  jitter_parameters(ps, 307);
  Rng rng(301);
  Tensor<double> x = random_tensor({3, 16, 16}, rng);
  LossWeights<double> w;  // lambda 1.0, eta 5e-3

  auto loss_of = [&](ParameterSet<double>& p) {
    ParameterSet<double> scratch = p;
    return static_cast<double>(
        generator_sample_backward(scratch, cfg, x, w, cfg.alpha, true, false, 1.0)
            .total);
  };
  auto backward = [&](ParameterSet<double>& p) {
    generator_sample_backward(p, cfg, x, w, cfg.alpha, true, false, 1.0);
  };
  check_gradients(ps, {"srsn", "decoder"}, loss_of, backward);
}

TEST_CASE("gradients: discriminator objective") {
  ModelConfig cfg = tiny();
  auto ps = init_parameters<double>(cfg, 400, false);
  jitter_parameters(ps, 407);
  Rng rng(401);
  Tensor<double> real = random_tensor({3, 32, 32}, rng);
  Tensor<double> fake = random_tensor({3, 32, 32}, rng);

  auto loss_of = [&](ParameterSet<double>& p) {
    ParameterSet<double> scratch = p;
    return discriminator_sample_backward(scratch, cfg, real, fake, 1.0);
  };
  auto backward = [&](ParameterSet<double>& p) {
    discriminator_sample_backward(p, cfg, real, fake, 1.0);
  };
  check_gradients(ps, {"discriminator"}, loss_of, backward);
}

TEST_CASE("gradients: adversarial generator term in isolation") {
  ModelConfig cfg = tiny();
  auto ps = init_parameters<double>(cfg, 500, false);
  jitter_parameters(ps, 507);
  Rng rng(501);
  Tensor<double> x = random_tensor({3, 16, 16}, rng);
  LossWeights<double> w;
  w.lambda_feat = 0.0;
  w.eta_adv = 1.0;  // amplified so the term dominates numerically

  auto loss_of = [&](ParameterSet<double>& p) {
    ParameterSet<double> scratch = p;
    return static_cast<double>(
        generator_sample_backward(scratch, cfg, x, w, cfg.alpha, false, false, 1.0)
            .total);
  };
  auto backward = [&](ParameterSet<double>& p) {
    generator_sample_backward(p, cfg, x, w, cfg.alpha, false, false, 1.0);
  };
  check_gradients(ps, {"srsn"}, loss_of, backward);
}

TEST_CASE("gradients: losses w.r.t. inputs (KL and MAE building blocks)") {
  Rng rng(601);

  // KL gradient vs finite differences
  LatentDistribution<double> d;
  for (int i = 0; i < 6; ++i) {
    d.mean.push_back(rng.uniform() - 0.5);
    d.log_variance.push_back(rng.uniform() - 0.5);
  }
  std::vector<double> dm(6, 0.0), dl(6, 0.0);
  kl_divergence_grad(d, 1.0, dm, dl);
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    auto dp = d;
    auto dmn = d;
    dp.mean[i] += h;
    dmn.mean[i] -= h;
    const double num = (kl_divergence(dp) - kl_divergence(dmn)) / (2 * h);
    CHECK(std::abs(dm[i] - num) / std::max(std::abs(num), 1e-6) < 1e-3);
    dp = d;
    dmn = d;
    dp.log_variance[i] += h;
    dmn.log_variance[i] -= h;
    const double numl = (kl_divergence(dp) - kl_divergence(dmn)) / (2 * h);
    CHECK(std::abs(dl[i] - numl) / std::max(std::abs(numl), 1e-6) < 1e-3);
  }

  // MAE gradient at generic (non-tied) points
  Tensor<double> a = random_tensor({3, 4, 4}, rng);
  Tensor<double> b = random_tensor({3, 4, 4}, rng);
  auto g = mean_abs_diff_grad(a, b, 1.0);
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = rng.uniform_int(a.size());
    Tensor<double> ap = a, am = a;
    ap.v[i] += h;
    am.v[i] -= h;
    const double num = (mean_abs_diff(ap, b) - mean_abs_diff(am, b)) / (2 * h);
    CHECK(std::abs(g.v[i] - num) < 1e-6);
  }
}
