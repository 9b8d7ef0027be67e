#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsrvae/checkpoint.hpp"
#include "dsrvae/config.hpp"
#include "dsrvae/degrade.hpp"
#include "dsrvae/losses.hpp"
#include "dsrvae/nn/networks.hpp"

namespace dsrvae {

// ---- dataset --------------------------------------------------------------

struct DatasetHandle {
  std::string source_dir;  // degraded / LR domain
  std::string target_dir;  // clean reference domain
  std::vector<std::string> source_names;
  std::vector<std::string> target_names;
  std::vector<BasicImage<float>> source_images;
  std::vector<BasicImage<float>> target_images;

  // Loads every PNG up front; desk-scale corpora are small.
  static DatasetHandle open(const std::string& source, const std::string& target) {
    DatasetHandle ds;
    ds.source_dir = source;
    ds.target_dir = target;
    auto scan = [](const std::string& dir, std::vector<std::string>& names,
                   std::vector<BasicImage<float>>& images) {
      if (dir.empty()) return;
      std::vector<std::string> files;
      for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
          files.push_back(e.path().filename().string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        names.push_back(f);
        images.push_back(load_image<float>(dir + "/" + f));
      }
    };
    scan(source, ds.source_names, ds.source_images);
    scan(target, ds.target_names, ds.target_images);
    return ds;
  }
};

struct PatchSample {
  BasicImage<float> patch;
  std::size_t image_index = 0;
  int y0 = 0;
  int x0 = 0;
};

namespace detail {

inline PatchSample sample_patch(const std::vector<BasicImage<float>>& images, int h,
                                int w, std::uint64_t seed, const char* what) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (images[i].height >= h && images[i].width >= w) eligible.push_back(i);
  if (eligible.empty())
    throw std::runtime_error(std::string(what) +
                             ": no image large enough for requested patch size");
  Rng rng(seed);
  PatchSample out;
  out.image_index = eligible[rng.uniform_int(eligible.size())];
  const auto& img = images[out.image_index];
  out.y0 = static_cast<int>(rng.uniform_int(img.height - h + 1));
  out.x0 = static_cast<int>(rng.uniform_int(img.width - w + 1));
  out.patch = BasicImage<float>(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.patch.at(c, y, x) = img.at(c, out.y0 + y, out.x0 + x);
  return out;
}

}  // namespace detail

inline PatchSample sample_lr_patch_ex(const DatasetHandle& ds, int size,
                                      std::uint64_t seed) {
  return detail::sample_patch(ds.source_images, size, size, seed, "sample_lr_patch");
}

inline BasicImage<float> sample_lr_patch(const DatasetHandle& ds, int size,
                                         std::uint64_t seed) {
  return sample_lr_patch_ex(ds, size, seed).patch;
}

inline PatchSample sample_reference_patch_ex(const DatasetHandle& ds, int h, int w,
                                             std::uint64_t seed) {
  return detail::sample_patch(ds.target_images, h, w, seed, "sample_reference_patch");
}

inline BasicImage<float> sample_reference_patch(const DatasetHandle& ds, int h, int w,
                                                std::uint64_t seed) {
  return sample_reference_patch_ex(ds, h, w, seed).patch;
}

// ---- optimizer ------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;
};

// One Adam update; t is the 1-based step count.
template <class T>
void adam_step(Param<T>& p, const AdamConfig& c, std::uint64_t t) {
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T corr1 = T(1) - static_cast<T>(std::pow(c.beta1, static_cast<double>(t)));
  const T corr2 = T(1) - static_cast<T>(std::pow(c.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(c.lr);
  const T wd = static_cast<T>(c.weight_decay);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    T g = p.grad.v[i];
    if (!c.decoupled) g += wd * p.value.v[i];
    p.adam_m.v[i] = b1 * p.adam_m.v[i] + (T(1) - b1) * g;
    p.adam_v.v[i] = b2 * p.adam_v.v[i] + (T(1) - b2) * g * g;
    const T mhat = p.adam_m.v[i] / corr1;
    const T vhat = p.adam_v.v[i] / corr2;
    p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + static_cast<T>(c.eps));
    if (c.decoupled) p.value.v[i] -= lr * wd * p.value.v[i];
  }
}

// ---- per-sample gradient steps (shared with the gradient-check tests) -----

// DAE objective on one (noisy, target, encoder-reference) triple; accumulates
// parameter grads scaled by `scale` and returns the unscaled terms.
template <class T>
LossBreakdown<T> dae_sample_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                                     const Tensor<T>& noisy, const Tensor<T>& target,
                                     const Tensor<T>& encoder_ref,
                                     const std::vector<T>& epsilon,
                                     const LossWeights<T>& weights, T scale) {
  EncoderCache<T> ec;
  LatentDistribution<T> dist = encode(ps, cfg, encoder_ref, ec);
  std::vector<T> z = sample_latent<T>(dist, &epsilon, 0);
  DecoderCache<T> dc;
  Tensor<T> denoised = denoise(ps, cfg, noisy, z, dc);

  LossBreakdown<T> out = dae_loss(denoised, target, dist, weights);

  Tensor<T> dden = mean_abs_diff_grad(denoised, target, scale);
  Tensor<T> dest(dden.shape);
  for (std::size_t i = 0; i < dden.size(); ++i) dest.v[i] = -dden.v[i];
  std::vector<T> dz = decoder_backward(ps, cfg, dc, dest);

  std::vector<T> dmean(dist.mean.size(), T(0));
  std::vector<T> dlogvar(dist.mean.size(), T(0));
  for (std::size_t i = 0; i < dz.size(); ++i) {
    dmean[i] += dz[i];
    dlogvar[i] += dz[i] * epsilon[i] * T(0.5) *
                  std::exp(T(0.5) * dist.log_variance[i]);
  }
  kl_divergence_grad(dist, weights.kl_weight * scale, dmean, dlogvar);
  // reparameterization grads above carry `scale` via dz already; the KL call
  // applied its own scale, so only the epsilon path needed no extra factor
  encoder_backward(ps, cfg, ec, dmean, dlogvar);
  return out;
}

// Generator-side objective on one LR patch: cycle terms always, feature and
// adversarial terms when weighted. Accumulates grads into srsn (and decoder
// when requested); discriminator grads are also touched through the
// adversarial term, so the caller zeroes grads before the discriminator step.
template <class T>
LossBreakdown<T> generator_sample_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                                           const Tensor<T>& x,
                                           const LossWeights<T>& weights, int alpha,
                                           bool into_decoder, bool non_saturating,
                                           T scale, Tensor<T>* out_sr = nullptr) {
  const int h = x.dim(1), w = x.dim(2);
  const int sh = h * alpha, sw = w * alpha;

  // g(X): denoise with the prior-mean latent
  std::vector<T> z(cfg.latent_len, T(0));
  DecoderCache<T> dcache;
  Tensor<T> gx = denoise(ps, cfg, x, z, dcache);

  // Y = f(g(X))
  Tensor<T> b1 = bicubic_resize_chw(gx, sh, sw, false);
  SrsnCache<T> sc1;
  Tensor<T> r1 = srsn_forward(ps, cfg, b1, sc1);
  Tensor<T> y = b1;
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += r1.v[i];

  // s(Y) and back-projection f(s(Y))
  Tensor<T> down = bicubic_resize_chw(y, h, w, true);
  Tensor<T> b2 = bicubic_resize_chw(down, sh, sw, false);
  SrsnCache<T> sc2;
  Tensor<T> r2 = srsn_forward(ps, cfg, b2, sc2);
  Tensor<T> yback = b2;
  for (std::size_t i = 0; i < yback.size(); ++i) yback.v[i] += r2.v[i];

  const T lowfreq = mean_abs_diff(down, gx);
  const T backproj = mean_abs_diff(y, yback);

  T feat = 0;
  FeatCache<T> fc_sr, fc_lr;
  Tensor<T> feat_sr, feat_lr, feat_srd;
  if (weights.lambda_feat > T(0)) {
    feat_sr = extract_features(ps, y, fc_sr);
    feat_lr = extract_features(ps, gx, fc_lr);
    feat_srd = bicubic_resize_chw(feat_sr, feat_lr.dim(1), feat_lr.dim(2), true);
    feat = mean_abs_diff(feat_srd, feat_lr);
  }

  T adv = 0;
  DiscCache<T> disc_cache;
  if (weights.eta_adv > T(0)) {
    const T p = discriminate(ps, cfg, y, disc_cache);
    adv = non_saturating ? -std::log(std::max(p, T(1e-7)))
                         : adversarial_loss_generator(p);
  }

  LossBreakdown<T> out = total_generator_loss(lowfreq, backproj, feat, adv, weights);
  if (out_sr) *out_sr = y;

  // ---- backward ----
  Tensor<T> dy({3, sh, sw});
  Tensor<T> dgx({3, h, w});
  Tensor<T> ddown({3, h, w});

  // low-frequency term: d/d(down) and d/d(gx)
  {
    Tensor<T> g = mean_abs_diff_grad(down, gx, scale);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ddown.v[i] += g.v[i];
      dgx.v[i] -= g.v[i];
    }
  }
  // back-projection term: d/dY and d/d(yback)
  {
    Tensor<T> g = mean_abs_diff_grad(y, yback, scale);
    Tensor<T> dyback(g.shape);
    for (std::size_t i = 0; i < g.size(); ++i) {
      dy.v[i] += g.v[i];
      dyback.v[i] = -g.v[i];
    }
    // yback = b2 + R(b2)
    Tensor<T> db2 = srsn_backward(ps, cfg, sc2, dyback);
    for (std::size_t i = 0; i < db2.size(); ++i) db2.v[i] += dyback.v[i];
    Tensor<T> dd = bicubic_resize_chw_backward(db2, h, w, false);
    for (std::size_t i = 0; i < dd.size(); ++i) ddown.v[i] += dd.v[i];
  }
  // feature term
  if (weights.lambda_feat > T(0)) {
    Tensor<T> g = mean_abs_diff_grad(feat_srd, feat_lr, weights.lambda_feat * scale);
    Tensor<T> dfs =
        bicubic_resize_chw_backward(g, feat_sr.dim(1), feat_sr.dim(2), true);
    Tensor<T> dy_f = features_backward(ps, fc_sr, dfs);
    for (std::size_t i = 0; i < dy.size(); ++i) dy.v[i] += dy_f.v[i];
    Tensor<T> gneg(g.shape);
    for (std::size_t i = 0; i < g.size(); ++i) gneg.v[i] = -g.v[i];
    Tensor<T> dgx_f = features_backward(ps, fc_lr, gneg);
    for (std::size_t i = 0; i < dgx.size(); ++i) dgx.v[i] += dgx_f.v[i];
  }
  // adversarial term
  if (weights.eta_adv > T(0)) {
    const T p = disc_cache.prob;
    T dp;
    if (non_saturating)
      dp = -weights.eta_adv * scale / std::max(p, T(1e-7));
    else
      dp = -weights.eta_adv * scale / std::max(T(1) - p, T(1e-7));
    Tensor<T> dy_a = discriminator_backward(ps, cfg, disc_cache, dp);
    for (std::size_t i = 0; i < dy.size(); ++i) dy.v[i] += dy_a.v[i];
  }

  // down node feeds Y through the down-sampling transpose
  {
    Tensor<T> dy_d = bicubic_resize_chw_backward(ddown, sh, sw, true);
    for (std::size_t i = 0; i < dy.size(); ++i) dy.v[i] += dy_d.v[i];
  }
  // Y = b1 + R(b1)
  {
    Tensor<T> db1 = srsn_backward(ps, cfg, sc1, dy);
    for (std::size_t i = 0; i < db1.size(); ++i) db1.v[i] += dy.v[i];
    Tensor<T> dg = bicubic_resize_chw_backward(db1, h, w, false);
    for (std::size_t i = 0; i < dgx.size(); ++i) dgx.v[i] += dg.v[i];
  }
  if (into_decoder) {
    Tensor<T> dest(dgx.shape);
    for (std::size_t i = 0; i < dgx.size(); ++i) dest.v[i] = -dgx.v[i];
    decoder_backward(ps, cfg, dcache, dest);
  }
  return out;
}

// Standard discriminator objective on a (real, fake) pair.
template <class T>
T discriminator_sample_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                                const Tensor<T>& real, const Tensor<T>& fake,
                                T scale) {
  DiscCache<T> cr, cf;
  const T pr = discriminate(ps, cfg, real, cr);
  const T pf = discriminate(ps, cfg, fake, cf);
  const T loss = discriminator_loss(pr, pf);
  discriminator_backward(ps, cfg, cr, -scale / std::max(pr, T(1e-7)));
  discriminator_backward(ps, cfg, cf, scale / std::max(T(1) - pf, T(1e-7)));
  return loss;
}

// ---- training loops -------------------------------------------------------

struct LossRecord {
  std::uint64_t iteration = 0;
  LossBreakdown<double> terms;
};

struct TrainResult {
  ParameterSet<float> params;
  ModelConfig model;
  TrainMeta meta;
  std::vector<LossRecord> log;  // exactly cfg.iterations records
};

// Thrown when a loss goes non-finite; carries the trailing breakdowns.
// Parameters passed by the caller are left at the last good state.
struct TrainingDiverged : std::runtime_error {
  std::uint64_t iteration;
  std::vector<LossRecord> last_records;
  TrainingDiverged(std::uint64_t it, std::vector<LossRecord> recs)
      : std::runtime_error("training diverged (non-finite loss) at iteration " +
                           std::to_string(it)),
        iteration(it),
        last_records(std::move(recs)) {}
};

namespace detail {

inline bool breakdown_finite(const LossBreakdown<double>& b) {
  for (double x : {b.kl, b.reconstruction, b.cycle_lowfreq, b.cycle_backproj,
                   b.feature, b.adversarial, b.total})
    if (!std::isfinite(x)) return false;
  return true;
}

inline std::vector<LossRecord> tail_records(const std::vector<LossRecord>& log,
                                            std::size_t n = 10) {
  const std::size_t k = std::min(n, log.size());
  return {log.end() - static_cast<std::ptrdiff_t>(k), log.end()};
}

template <class F>
TrainResult run_training(const DatasetHandle& ds, const TrainConfig& cfg,
                         const LoadedCheckpoint<float>* resume,
                         const std::string& phase_name, F&& iteration_body) {
  TrainResult res;
  if (resume) {
    if (resume->config != cfg.model)
      throw std::invalid_argument("resume checkpoint model config mismatch");
    res.params = resume->params;
    res.meta = resume->meta;
    if (resume->meta.phase != phase_name) {
      // starting a new phase from another phase's weights: the iteration
      // counter, loss history and optimizer state belong to the phase
      res.meta.iteration = 0;
      res.meta.loss_history.clear();
      for (auto& p : res.params.items()) {
        p.adam_m.fill(0.0f);
        p.adam_v.fill(0.0f);
      }
    }
  } else {
    res.params = init_parameters<float>(cfg.model, cfg.seed, true);
  }
  res.meta.seed = cfg.seed;
  res.model = cfg.model;
  res.meta.phase = phase_name;

  const std::uint64_t start = res.meta.iteration;
  for (int i = 0; i < cfg.iterations; ++i) {
    const std::uint64_t iter = start + static_cast<std::uint64_t>(i);
    const std::uint64_t iter_seed = hash_combine(cfg.seed, iter);
    res.params.zero_grads();
    LossBreakdown<double> terms = iteration_body(res.params, ds, iter, iter_seed);
    if (!breakdown_finite(terms)) {
      // the current update was not applied; params hold the last good state
      auto recs = tail_records(res.log);
      recs.push_back({iter, terms});
      throw TrainingDiverged(iter, std::move(recs));
    }
    res.log.push_back({iter, terms});
    res.meta.loss_history.push_back(terms.total);
    res.meta.iteration = iter + 1;
  }
  return res;
}

inline void step_owners(ParameterSet<float>& ps, const AdamConfig& ac,
                        std::uint64_t t, const std::vector<std::string>& owners) {
  for (auto& p : ps.items())
    if (std::find(owners.begin(), owners.end(), p.owner) != owners.end())
      adam_step(p, ac, t);
}

inline AdamConfig adam_from(const TrainConfig& cfg) {
  return {cfg.lr,       cfg.adam_beta1,   cfg.adam_beta2,
          cfg.adam_eps, cfg.weight_decay, cfg.decoupled_weight_decay};
}

}  // namespace detail

// DAE pre-training. Synthetic-paired mode degrades a clean target patch
// (blur + noise, no down-sampling) to obtain the (X, T) pair; unpaired mode
// encodes an independent reference patch and reconstructs toward X itself.
inline TrainResult train_dae(const DatasetHandle& ds, const TrainConfig& cfg,
                             const LoadedCheckpoint<float>* resume = nullptr) {
  if (cfg.phase != TrainPhase::dae)
    throw std::invalid_argument("train_dae: cfg.phase must be dae");
  if (ds.target_images.empty()) throw std::runtime_error("train_dae: empty dataset");
  const AdamConfig ac = detail::adam_from(cfg);
  const LossWeights<float> w{static_cast<float>(cfg.weights.lambda_feat),
                             static_cast<float>(cfg.weights.eta_adv),
                             static_cast<float>(cfg.weights.kl_weight)};
  const bool train_encoder = cfg.model.encoder_kind == EncoderKind::small_conv;

  return detail::run_training(
      ds, cfg, resume, "dae",
      [&](ParameterSet<float>& ps, const DatasetHandle& d, std::uint64_t iter,
          std::uint64_t iter_seed) {
        LossBreakdown<double> mean{};
        for (int s = 0; s < cfg.batch; ++s) {
          const std::uint64_t ss = hash_combine(iter_seed, static_cast<std::uint64_t>(s));
          BasicImage<float> target =
              sample_reference_patch(d, cfg.lr_patch, cfg.lr_patch, hash_combine(ss, 1));
          BasicImage<float> noisy = gaussian_blur(target, cfg.degradation.blur_sigma);
          noisy = add_gaussian_noise(noisy, cfg.degradation.noise_sigma,
                                     hash_combine(ss, 2));
          BasicImage<float> encref =
              cfg.pairing == PairingMode::synthetic_paired
                  ? target
                  : sample_reference_patch(d, cfg.lr_patch, cfg.lr_patch,
                                           hash_combine(ss, 4));
          const Tensor<float> recon_target =
              image_to_tensor(cfg.pairing == PairingMode::synthetic_paired ? target
                                                                           : noisy);
          std::vector<float> eps(cfg.model.latent_len);
          Rng erng(hash_combine(ss, 3));
          for (auto& e : eps) e = static_cast<float>(erng.normal());

          LossBreakdown<float> b = dae_sample_backward(
              ps, cfg.model, image_to_tensor(noisy), recon_target,
              image_to_tensor(encref), eps, w, 1.0f / cfg.batch);
          mean.kl += b.kl / cfg.batch;
          mean.reconstruction += b.reconstruction / cfg.batch;
          mean.total += b.total / cfg.batch;
        }
        if (!detail::breakdown_finite(mean)) return mean;
        detail::step_owners(ps, ac, iter + 1,
                            train_encoder
                                ? std::vector<std::string>{"encoder", "decoder"}
                                : std::vector<std::string>{"decoder"});
        return mean;
      });
}

// Adversarial SR training with the cycle strategy: one generator update and
// one discriminator update per iteration.
inline TrainResult train_sr(const DatasetHandle& ds, const TrainConfig& cfg,
                            const LoadedCheckpoint<float>& dae_ckpt,
                            const LoadedCheckpoint<float>* resume = nullptr) {
  if (cfg.phase != TrainPhase::sr)
    throw std::invalid_argument("train_sr: cfg.phase must be sr");
  if (ds.source_images.empty()) throw std::runtime_error("train_sr: empty source dataset");
  if (cfg.weights.eta_adv > 0 && ds.target_images.empty())
    throw std::runtime_error("train_sr: empty target dataset");
  const AdamConfig ac = detail::adam_from(cfg);
  const LossWeights<float> w{static_cast<float>(cfg.weights.lambda_feat),
                             static_cast<float>(cfg.weights.eta_adv),
                             static_cast<float>(cfg.weights.kl_weight)};

  const LoadedCheckpoint<float>* init_from = resume ? resume : &dae_ckpt;
  return detail::run_training(
      ds, cfg, init_from, "sr",
      [&](ParameterSet<float>& ps, const DatasetHandle& d, std::uint64_t iter,
          std::uint64_t iter_seed) {
        std::vector<std::string> gen_owners{"srsn"};
        if (cfg.train_decoder) gen_owners.push_back("decoder");

        LossBreakdown<double> mean{};
        std::vector<Tensor<float>> fakes;
        for (int s = 0; s < cfg.batch; ++s) {
          const std::uint64_t ss = hash_combine(iter_seed, static_cast<std::uint64_t>(s));
          BasicImage<float> x = sample_lr_patch(d, cfg.lr_patch, hash_combine(ss, 1));
          Tensor<float> sr;
          LossBreakdown<float> b = generator_sample_backward(
              ps, cfg.model, image_to_tensor(x), w, cfg.alpha, cfg.train_decoder,
              cfg.non_saturating, 1.0f / cfg.batch, &sr);
          mean.cycle_lowfreq += b.cycle_lowfreq / cfg.batch;
          mean.cycle_backproj += b.cycle_backproj / cfg.batch;
          mean.feature += b.feature / cfg.batch;
          mean.adversarial += b.adversarial / cfg.batch;
          mean.total += b.total / cfg.batch;
          if (cfg.weights.eta_adv > 0) fakes.push_back(std::move(sr));
        }
        if (!detail::breakdown_finite(mean)) return mean;
        detail::step_owners(ps, ac, iter + 1, gen_owners);

        if (cfg.weights.eta_adv > 0) {
          ps.zero_grads();
          for (int s = 0; s < cfg.batch; ++s) {
            const std::uint64_t ss =
                hash_combine(iter_seed, static_cast<std::uint64_t>(s));
            BasicImage<float> real = sample_reference_patch(
                d, cfg.alpha * cfg.lr_patch, cfg.alpha * cfg.lr_patch,
                hash_combine(ss, 2));
            discriminator_sample_backward(ps, cfg.model, image_to_tensor(real),
                                          fakes[static_cast<std::size_t>(s)],
                                          1.0f / cfg.batch);
          }
          detail::step_owners(ps, ac, iter + 1, {"discriminator"});
        }
        return mean;
      });
}

// Joint fine-tuning: DAE objective and generator objective in one update,
// then the discriminator step. Off by default in the operator workflow.
inline TrainResult train_joint(const DatasetHandle& ds, const TrainConfig& cfg,
                               const LoadedCheckpoint<float>& start,
                               const LoadedCheckpoint<float>* resume = nullptr) {
  if (cfg.phase != TrainPhase::joint)
    throw std::invalid_argument("train_joint: cfg.phase must be joint");
  if (ds.source_images.empty() || ds.target_images.empty())
    throw std::runtime_error("train_joint: empty dataset");
  const AdamConfig ac = detail::adam_from(cfg);
  const LossWeights<float> w{static_cast<float>(cfg.weights.lambda_feat),
                             static_cast<float>(cfg.weights.eta_adv),
                             static_cast<float>(cfg.weights.kl_weight)};
  const bool train_encoder = cfg.model.encoder_kind == EncoderKind::small_conv;

  const LoadedCheckpoint<float>* init_from = resume ? resume : &start;
  return detail::run_training(
      ds, cfg, init_from, "joint",
      [&](ParameterSet<float>& ps, const DatasetHandle& d, std::uint64_t iter,
          std::uint64_t iter_seed) {
        LossBreakdown<double> mean{};
        std::vector<Tensor<float>> fakes;
        for (int s = 0; s < cfg.batch; ++s) {
          const std::uint64_t ss = hash_combine(iter_seed, static_cast<std::uint64_t>(s));
          // DAE half
          BasicImage<float> target =
              sample_reference_patch(d, cfg.lr_patch, cfg.lr_patch, hash_combine(ss, 1));
          BasicImage<float> noisy = gaussian_blur(target, cfg.degradation.blur_sigma);
          noisy = add_gaussian_noise(noisy, cfg.degradation.noise_sigma,
                                     hash_combine(ss, 2));
          std::vector<float> eps(cfg.model.latent_len);
          Rng erng(hash_combine(ss, 3));
          for (auto& e : eps) e = static_cast<float>(erng.normal());
          LossBreakdown<float> bd = dae_sample_backward(
              ps, cfg.model, image_to_tensor(noisy), image_to_tensor(target),
              image_to_tensor(target), eps, w, 1.0f / cfg.batch);
          // generator half
          BasicImage<float> x = sample_lr_patch(d, cfg.lr_patch, hash_combine(ss, 5));
          Tensor<float> sr;
          LossBreakdown<float> bg = generator_sample_backward(
              ps, cfg.model, image_to_tensor(x), w, cfg.alpha, true,
              cfg.non_saturating, 1.0f / cfg.batch, &sr);
          mean.kl += bd.kl / cfg.batch;
          mean.reconstruction += bd.reconstruction / cfg.batch;
          mean.cycle_lowfreq += bg.cycle_lowfreq / cfg.batch;
          mean.cycle_backproj += bg.cycle_backproj / cfg.batch;
          mean.feature += bg.feature / cfg.batch;
          mean.adversarial += bg.adversarial / cfg.batch;
          mean.total += (bd.total + bg.total) / cfg.batch;
          if (cfg.weights.eta_adv > 0) fakes.push_back(std::move(sr));
        }
        if (!detail::breakdown_finite(mean)) return mean;
        std::vector<std::string> owners{"decoder", "srsn"};
        if (train_encoder) owners.push_back("encoder");
        detail::step_owners(ps, ac, iter + 1, owners);

        if (cfg.weights.eta_adv > 0) {
          ps.zero_grads();
          for (int s = 0; s < cfg.batch; ++s) {
            const std::uint64_t ss =
                hash_combine(iter_seed, static_cast<std::uint64_t>(s));
            BasicImage<float> real = sample_reference_patch(
                d, cfg.alpha * cfg.lr_patch, cfg.alpha * cfg.lr_patch,
                hash_combine(ss, 6));
            discriminator_sample_backward(ps, cfg.model, image_to_tensor(real),
                                          fakes[static_cast<std::size_t>(s)],
                                          1.0f / cfg.batch);
          }
          detail::step_owners(ps, ac, iter + 1, {"discriminator"});
        }
        return mean;
      });
}

// Loss log serialization: one JSON record per line.
inline void write_loss_log(const std::vector<LossRecord>& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write loss log: " + path);
  for (const auto& r : log) {
    nlohmann::json j{{"iteration", r.iteration},
                     {"kl", r.terms.kl},
                     {"reconstruction", r.terms.reconstruction},
                     {"cycle_lowfreq", r.terms.cycle_lowfreq},
                     {"cycle_backproj", r.terms.cycle_backproj},
                     {"feature", r.terms.feature},
                     {"adversarial", r.terms.adversarial},
                     {"total", r.terms.total}};
    f << j.dump() << "\n";
  }
}

}  // namespace dsrvae
