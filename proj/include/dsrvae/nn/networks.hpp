#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dsrvae/nn/layers.hpp"
#include "dsrvae/resize.hpp"
#include "dsrvae/rng.hpp"

namespace dsrvae {

enum class EncoderKind { small_conv, frozen_pretrained };

// Seed for the frozen feature extractor; never varies with the run seed.
inline constexpr std::uint64_t kFeatureSeed = 2020;

struct ModelConfig {
  int latent_len = 512;
  int srsn_blocks = 4;
  int srsn_channels = 64;
  int alpha = 4;
  int decoder_resblocks = 3;
  int decoder_channels = 64;
  std::vector<int> encoder_channels = {32, 64, 128, 128};  // 4 stride-2 stages
  int disc_base_channels = 32;  // doubled per stage, 5 stages
  EncoderKind encoder_kind = EncoderKind::small_conv;

  // Laptop-scale preset used by the desk training configs.
  static ModelConfig desk() {
    ModelConfig c;
    c.latent_len = 64;
    c.srsn_channels = 8;
    c.decoder_channels = 16;
    c.encoder_channels = {8, 16, 32, 32};
    c.disc_base_channels = 8;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

inline const std::vector<int> kFeatureChannels = {16, 32, 32, 32};

template <class T>
struct LatentDistribution {
  std::vector<T> mean;
  std::vector<T> log_variance;
};

// z = mean + eps .* exp(0.5 * log_variance); eps ~ N(0,1) when not supplied.
template <class T>
std::vector<T> sample_latent(const LatentDistribution<T>& dist,
                             const std::vector<T>* epsilon, std::uint64_t seed) {
  const std::size_t n = dist.mean.size();
  if (epsilon && epsilon->size() != n)
    throw std::invalid_argument("sample_latent: epsilon length mismatch");
  Rng rng(seed);
  std::vector<T> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T e = epsilon ? (*epsilon)[i] : static_cast<T>(rng.normal());
    z[i] = dist.mean[i] + e * std::exp(T(0.5) * dist.log_variance[i]);
  }
  return z;
}

// ---- parameter construction -----------------------------------------------

template <class T>
ParameterSet<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed,
                                bool identity_start = true) {
  ParameterSet<T> ps;
  Rng rng(hash_combine(seed, 0x6d6f64656cULL));
  const int dc = cfg.decoder_channels;

  // encoder: 4 stride-2 conv stages, GAP, two linear heads
  {
    int in = 3;
    for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
      const int out = cfg.encoder_channels[i];
      auto& w = ps.add("encoder.stage" + std::to_string(i) + ".w", "encoder",
                       {out, in, 3, 3});
      nn::he_init(w.value, static_cast<std::size_t>(in) * 9, rng);
      ps.add("encoder.stage" + std::to_string(i) + ".b", "encoder", {out});
      in = out;
    }
    auto& wm = ps.add("encoder.mean.w", "encoder", {cfg.latent_len, in});
    nn::he_init(wm.value, in, rng);
    ps.add("encoder.mean.b", "encoder", {cfg.latent_len});
    auto& wl = ps.add("encoder.logvar.w", "encoder", {cfg.latent_len, in});
    nn::he_init(wl.value, in, rng);
    ps.add("encoder.logvar.b", "encoder", {cfg.latent_len});
  }

  // decoder: stride-16 embedding + broadcast z, two stride-4 deconvs,
  // full-resolution injection of the noisy input, residual refinement
  {
    auto& we = ps.add("decoder.embed.w", "decoder", {dc, 3, 16, 16});
    nn::he_init(we.value, 3u * 256, rng);
    ps.add("decoder.embed.b", "decoder", {dc});
    auto& w1 = ps.add("decoder.deconv1.w", "decoder",
                      {cfg.latent_len + dc, dc, 6, 6});
    nn::he_init(w1.value, static_cast<std::size_t>(cfg.latent_len + dc) * 36, rng);
    ps.add("decoder.deconv1.b", "decoder", {dc});
    auto& w2 = ps.add("decoder.deconv2.w", "decoder", {dc, dc, 6, 6});
    nn::he_init(w2.value, static_cast<std::size_t>(dc) * 36, rng);
    ps.add("decoder.deconv2.b", "decoder", {dc});
    auto& wi = ps.add("decoder.inject.w", "decoder", {dc, 3, 3, 3});
    nn::he_init(wi.value, 27, rng);
    ps.add("decoder.inject.b", "decoder", {dc});
    auto& wf = ps.add("decoder.fuse.w", "decoder", {dc, 2 * dc, 3, 3});
    nn::he_init(wf.value, static_cast<std::size_t>(2 * dc) * 9, rng);
    ps.add("decoder.fuse.b", "decoder", {dc});
    for (int i = 0; i < cfg.decoder_resblocks; ++i) {
      for (const char* half : {"conv1", "conv2"}) {
        auto& w = ps.add("decoder.res" + std::to_string(i) + "." + half + ".w",
                         "decoder", {dc, dc, 3, 3});
        nn::he_init(w.value, static_cast<std::size_t>(dc) * 9, rng);
        ps.add("decoder.res" + std::to_string(i) + "." + half + ".b", "decoder", {dc});
      }
    }
    auto& wo = ps.add("decoder.out.w", "decoder", {3, dc, 3, 3});
    if (!identity_start) nn::he_init(wo.value, static_cast<std::size_t>(dc) * 9, rng);
    ps.add("decoder.out.b", "decoder", {3});
  }

  // SRSN: conv-in, residual blocks, zero-init conv-out
  {
    const int sc = cfg.srsn_channels;
    auto& wi = ps.add("srsn.in.w", "srsn", {sc, 3, 3, 3});
    nn::he_init(wi.value, 27, rng);
    ps.add("srsn.in.b", "srsn", {sc});
    for (int i = 0; i < cfg.srsn_blocks; ++i) {
      for (const char* half : {"conv1", "conv2"}) {
        auto& w = ps.add("srsn.res" + std::to_string(i) + "." + half + ".w",
                         "srsn", {sc, sc, 3, 3});
        nn::he_init(w.value, static_cast<std::size_t>(sc) * 9, rng);
        ps.add("srsn.res" + std::to_string(i) + "." + half + ".b", "srsn", {sc});
      }
    }
    auto& wo = ps.add("srsn.out.w", "srsn", {3, sc, 3, 3});
    if (!identity_start) nn::he_init(wo.value, static_cast<std::size_t>(sc) * 9, rng);
    ps.add("srsn.out.b", "srsn", {3});
  }

  // discriminator: 5 stride-2 convs, GAP, single logit
  {
    int in = 3;
    for (int i = 0; i < 5; ++i) {
      const int out = cfg.disc_base_channels << i;
      auto& w = ps.add("disc.conv" + std::to_string(i) + ".w", "discriminator",
                       {out, in, 3, 3});
      nn::he_init(w.value, static_cast<std::size_t>(in) * 9, rng);
      ps.add("disc.conv" + std::to_string(i) + ".b", "discriminator", {out});
      in = out;
    }
    auto& wf = ps.add("disc.fc.w", "discriminator", {1, in});
    nn::he_init(wf.value, in, rng);
    ps.add("disc.fc.b", "discriminator", {1});
  }

  // frozen feature extractor, seeded independently of the run seed
  {
    Rng frng(kFeatureSeed);
    int in = 3;
    for (std::size_t i = 0; i < kFeatureChannels.size(); ++i) {
      const int out = kFeatureChannels[i];
      auto& w = ps.add("features.stage" + std::to_string(i) + ".w", "features",
                       {out, in, 3, 3});
      nn::he_init(w.value, static_cast<std::size_t>(in) * 9, frng);
      ps.add("features.stage" + std::to_string(i) + ".b", "features", {out});
      in = out;
    }
  }

  return ps;
}

// ---- encoder --------------------------------------------------------------

template <class T>
struct EncoderCache {
  std::vector<Tensor<T>> inputs;   // input to each conv stage
  std::vector<Tensor<T>> outputs;  // post-relu output of each stage
  std::vector<T> pooled;
};

template <class T>
LatentDistribution<T> encode(const ParameterSet<T>& ps, const ModelConfig& cfg,
                             const Tensor<T>& reference, EncoderCache<T>& cache) {
  if (reference.dim(1) < 16 || reference.dim(2) < 16)
    throw std::invalid_argument("encode: input smaller than encoder stride (16)");
  cache.inputs.clear();
  cache.outputs.clear();
  Tensor<T> x = reference;
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    cache.inputs.push_back(x);
    const auto& w = ps.at("encoder.stage" + std::to_string(i) + ".w").value;
    const auto& b = ps.at("encoder.stage" + std::to_string(i) + ".b").value;
    x = nn::conv2d(x, w, b, 2, 1);
    nn::relu_inplace(x);
    cache.outputs.push_back(x);
  }
  cache.pooled = nn::global_avg_pool(x);
  LatentDistribution<T> dist;
  dist.mean = nn::linear(cache.pooled, ps.at("encoder.mean.w").value,
                         ps.at("encoder.mean.b").value);
  dist.log_variance = nn::linear(cache.pooled, ps.at("encoder.logvar.w").value,
                                 ps.at("encoder.logvar.b").value);
  return dist;
}

template <class T>
void encoder_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                      const EncoderCache<T>& cache, const std::vector<T>& dmean,
                      const std::vector<T>& dlogvar) {
  auto& pm = ps.at("encoder.mean.w");
  auto& pmb = ps.at("encoder.mean.b");
  auto& pl = ps.at("encoder.logvar.w");
  auto& plb = ps.at("encoder.logvar.b");
  std::vector<T> gp =
      nn::linear_backward(cache.pooled, pm.value, dmean, pm.grad, pmb.grad);
  std::vector<T> gp2 =
      nn::linear_backward(cache.pooled, pl.value, dlogvar, pl.grad, plb.grad);
  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gp2[i];

  const Tensor<T>& last = cache.outputs.back();
  Tensor<T> g = nn::global_avg_pool_backward(gp, last.dim(0), last.dim(1), last.dim(2));
  for (int i = static_cast<int>(cfg.encoder_channels.size()) - 1; i >= 0; --i) {
    nn::relu_backward_inplace(g, cache.outputs[i]);
    auto& pw = ps.at("encoder.stage" + std::to_string(i) + ".w");
    auto& pb = ps.at("encoder.stage" + std::to_string(i) + ".b");
    g = nn::conv2d_backward(cache.inputs[i], pw.value, g, pw.grad, pb.grad, 2, 1);
  }
}

// ---- decoder (noise estimator) --------------------------------------------

template <class T>
struct DecoderCache {
  Tensor<T> noisy;
  std::vector<T> z;
  Tensor<T> embed_out;   // post-relu, latent grid
  Tensor<T> head_in;     // concat(z-grid, embed)
  Tensor<T> d1_out, d2_out;
  Tensor<T> inject_out;
  Tensor<T> fuse_in;     // concat(d2, inject)
  Tensor<T> fuse_out;
  std::vector<Tensor<T>> res_in;   // input of each residual block
  std::vector<Tensor<T>> res_mid;  // post-relu mid activation
};

template <class T>
Tensor<T> decode_noise(const ParameterSet<T>& ps, const ModelConfig& cfg,
                       const Tensor<T>& noisy, const std::vector<T>& z,
                       DecoderCache<T>& cache) {
  const int h = noisy.dim(1), w = noisy.dim(2);
  if (h % 16 || w % 16)
    throw std::invalid_argument("decode_noise: dims must be divisible by 16");
  if (static_cast<int>(z.size()) != cfg.latent_len)
    throw std::invalid_argument("decode_noise: latent length mismatch");
  cache.noisy = noisy;
  cache.z = z;

  Tensor<T> e = nn::conv2d(noisy, ps.at("decoder.embed.w").value,
                           ps.at("decoder.embed.b").value, 16, 0);
  nn::relu_inplace(e);
  cache.embed_out = e;

  // broadcast z over the latent grid
  Tensor<T> zgrid({cfg.latent_len, h / 16, w / 16});
  const std::size_t hw = static_cast<std::size_t>(h / 16) * (w / 16);
  for (int c = 0; c < cfg.latent_len; ++c)
    std::fill(zgrid.data() + c * hw, zgrid.data() + (c + 1) * hw, z[c]);
  cache.head_in = nn::concat_channels(zgrid, e);

  Tensor<T> d1 = nn::conv_transpose2d(cache.head_in, ps.at("decoder.deconv1.w").value,
                                      ps.at("decoder.deconv1.b").value, 4, 1);
  nn::relu_inplace(d1);
  cache.d1_out = d1;
  Tensor<T> d2 = nn::conv_transpose2d(d1, ps.at("decoder.deconv2.w").value,
                                      ps.at("decoder.deconv2.b").value, 4, 1);
  nn::relu_inplace(d2);
  cache.d2_out = d2;

  Tensor<T> inj = nn::conv2d(noisy, ps.at("decoder.inject.w").value,
                             ps.at("decoder.inject.b").value, 1, 1);
  nn::relu_inplace(inj);
  cache.inject_out = inj;

  cache.fuse_in = nn::concat_channels(d2, inj);
  Tensor<T> x = nn::conv2d(cache.fuse_in, ps.at("decoder.fuse.w").value,
                           ps.at("decoder.fuse.b").value, 1, 1);
  nn::relu_inplace(x);
  cache.fuse_out = x;

  cache.res_in.clear();
  cache.res_mid.clear();
  for (int i = 0; i < cfg.decoder_resblocks; ++i) {
    cache.res_in.push_back(x);
    const std::string p = "decoder.res" + std::to_string(i);
    Tensor<T> m = nn::conv2d(x, ps.at(p + ".conv1.w").value,
                             ps.at(p + ".conv1.b").value, 1, 1);
    nn::relu_inplace(m);
    cache.res_mid.push_back(m);
    Tensor<T> r = nn::conv2d(m, ps.at(p + ".conv2.w").value,
                             ps.at(p + ".conv2.b").value, 1, 1);
    for (std::size_t t = 0; t < x.size(); ++t) x.v[t] += r.v[t];
  }
  cache.res_in.push_back(x);  // input to the output conv

  // no output nonlinearity: the noise field may be negative
  return nn::conv2d(x, ps.at("decoder.out.w").value, ps.at("decoder.out.b").value,
                    1, 1);
}

// Returns d(loss)/dz; parameter grads are accumulated in place.
template <class T>
std::vector<T> decoder_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                                const DecoderCache<T>& cache, const Tensor<T>& dout) {
  auto& po = ps.at("decoder.out.w");
  auto& pob = ps.at("decoder.out.b");
  Tensor<T> g = nn::conv2d_backward(cache.res_in.back(), po.value, dout, po.grad,
                                    pob.grad, 1, 1);
  for (int i = cfg.decoder_resblocks - 1; i >= 0; --i) {
    const std::string p = "decoder.res" + std::to_string(i);
    auto& p2 = ps.at(p + ".conv2.w");
    auto& p2b = ps.at(p + ".conv2.b");
    Tensor<T> gm =
        nn::conv2d_backward(cache.res_mid[i], p2.value, g, p2.grad, p2b.grad, 1, 1);
    nn::relu_backward_inplace(gm, cache.res_mid[i]);
    auto& p1 = ps.at(p + ".conv1.w");
    auto& p1b = ps.at(p + ".conv1.b");
    Tensor<T> gx =
        nn::conv2d_backward(cache.res_in[i], p1.value, gm, p1.grad, p1b.grad, 1, 1);
    for (std::size_t t = 0; t < g.size(); ++t) g.v[t] += gx.v[t];  // skip path
  }

  nn::relu_backward_inplace(g, cache.fuse_out);
  auto& pf = ps.at("decoder.fuse.w");
  auto& pfb = ps.at("decoder.fuse.b");
  Tensor<T> gfuse =
      nn::conv2d_backward(cache.fuse_in, pf.value, g, pf.grad, pfb.grad, 1, 1);

  const int dc = cfg.decoder_channels;
  Tensor<T> gd2({dc, gfuse.dim(1), gfuse.dim(2)});
  Tensor<T> ginj({dc, gfuse.dim(1), gfuse.dim(2)});
  std::copy(gfuse.v.begin(), gfuse.v.begin() + gd2.size(), gd2.v.begin());
  std::copy(gfuse.v.begin() + gd2.size(), gfuse.v.end(), ginj.v.begin());

  nn::relu_backward_inplace(ginj, cache.inject_out);
  auto& pi = ps.at("decoder.inject.w");
  auto& pib = ps.at("decoder.inject.b");
  nn::conv2d_backward(cache.noisy, pi.value, ginj, pi.grad, pib.grad, 1, 1);

  nn::relu_backward_inplace(gd2, cache.d2_out);
  auto& pd2 = ps.at("decoder.deconv2.w");
  auto& pd2b = ps.at("decoder.deconv2.b");
  Tensor<T> gd1 = nn::conv_transpose2d_backward(cache.d1_out, pd2.value, gd2,
                                                pd2.grad, pd2b.grad, 4, 1);
  nn::relu_backward_inplace(gd1, cache.d1_out);
  auto& pd1 = ps.at("decoder.deconv1.w");
  auto& pd1b = ps.at("decoder.deconv1.b");
  Tensor<T> ghead = nn::conv_transpose2d_backward(cache.head_in, pd1.value, gd1,
                                                  pd1.grad, pd1b.grad, 4, 1);

  // split: first latent_len channels belong to the z broadcast
  const std::size_t hw =
      static_cast<std::size_t>(ghead.dim(1)) * ghead.dim(2);
  std::vector<T> dz(cfg.latent_len, T(0));
  for (int c = 0; c < cfg.latent_len; ++c) {
    T acc = 0;
    const T* p = ghead.data() + c * hw;
    for (std::size_t t = 0; t < hw; ++t) acc += p[t];
    dz[c] = acc;
  }
  Tensor<T> gembed({cfg.decoder_channels, ghead.dim(1), ghead.dim(2)});
  std::copy(ghead.v.begin() + static_cast<std::size_t>(cfg.latent_len) * hw,
            ghead.v.end(), gembed.v.begin());
  nn::relu_backward_inplace(gembed, cache.embed_out);
  auto& pe = ps.at("decoder.embed.w");
  auto& peb = ps.at("decoder.embed.b");
  nn::conv2d_backward(cache.noisy, pe.value, gembed, pe.grad, peb.grad, 16, 0);
  return dz;
}

// denoised = noisy - estimated noise; holds exactly by construction.
template <class T>
Tensor<T> denoise(const ParameterSet<T>& ps, const ModelConfig& cfg,
                  const Tensor<T>& noisy, const std::vector<T>& z,
                  DecoderCache<T>& cache) {
  Tensor<T> est = decode_noise(ps, cfg, noisy, z, cache);
  Tensor<T> out = noisy;
  for (std::size_t t = 0; t < out.size(); ++t) out.v[t] -= est.v[t];
  return out;
}

enum class InferenceLatent { prior_mean, prior_sample };

template <class T>
Tensor<T> denoise_inference(const ParameterSet<T>& ps, const ModelConfig& cfg,
                            const Tensor<T>& noisy,
                            InferenceLatent mode = InferenceLatent::prior_mean,
                            std::uint64_t seed = 0) {
  std::vector<T> z(cfg.latent_len, T(0));
  if (mode == InferenceLatent::prior_sample) {
    Rng rng(seed);
    for (auto& e : z) e = static_cast<T>(rng.normal());
  }
  DecoderCache<T> cache;
  return denoise(ps, cfg, noisy, z, cache);
}

// ---- SRSN -----------------------------------------------------------------

template <class T>
struct SrsnCache {
  Tensor<T> input;
  Tensor<T> in_out;  // post-relu conv-in
  std::vector<Tensor<T>> res_in;
  std::vector<Tensor<T>> res_mid;
};

// Residual branch R(B); the caller adds the global skip from B.
template <class T>
Tensor<T> srsn_forward(const ParameterSet<T>& ps, const ModelConfig& cfg,
                       const Tensor<T>& b, SrsnCache<T>& cache) {
  cache.input = b;
  Tensor<T> x = nn::conv2d(b, ps.at("srsn.in.w").value, ps.at("srsn.in.b").value, 1, 1);
  nn::relu_inplace(x);
  cache.in_out = x;
  cache.res_in.clear();
  cache.res_mid.clear();
  for (int i = 0; i < cfg.srsn_blocks; ++i) {
    cache.res_in.push_back(x);
    const std::string p = "srsn.res" + std::to_string(i);
    Tensor<T> m = nn::conv2d(x, ps.at(p + ".conv1.w").value,
                             ps.at(p + ".conv1.b").value, 1, 1);
    nn::relu_inplace(m);
    cache.res_mid.push_back(m);
    Tensor<T> r = nn::conv2d(m, ps.at(p + ".conv2.w").value,
                             ps.at(p + ".conv2.b").value, 1, 1);
    for (std::size_t t = 0; t < x.size(); ++t) x.v[t] += r.v[t];
  }
  cache.res_in.push_back(x);
  return nn::conv2d(x, ps.at("srsn.out.w").value, ps.at("srsn.out.b").value, 1, 1);
}

// Gradient of the residual branch w.r.t. its input B.
template <class T>
Tensor<T> srsn_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                        const SrsnCache<T>& cache, const Tensor<T>& dout) {
  auto& po = ps.at("srsn.out.w");
  auto& pob = ps.at("srsn.out.b");
  Tensor<T> g = nn::conv2d_backward(cache.res_in.back(), po.value, dout, po.grad,
                                    pob.grad, 1, 1);
  for (int i = cfg.srsn_blocks - 1; i >= 0; --i) {
    const std::string p = "srsn.res" + std::to_string(i);
    auto& p2 = ps.at(p + ".conv2.w");
    auto& p2b = ps.at(p + ".conv2.b");
    Tensor<T> gm =
        nn::conv2d_backward(cache.res_mid[i], p2.value, g, p2.grad, p2b.grad, 1, 1);
    nn::relu_backward_inplace(gm, cache.res_mid[i]);
    auto& p1 = ps.at(p + ".conv1.w");
    auto& p1b = ps.at(p + ".conv1.b");
    Tensor<T> gx =
        nn::conv2d_backward(cache.res_in[i], p1.value, gm, p1.grad, p1b.grad, 1, 1);
    for (std::size_t t = 0; t < g.size(); ++t) g.v[t] += gx.v[t];
  }
  nn::relu_backward_inplace(g, cache.in_out);
  auto& pi = ps.at("srsn.in.w");
  auto& pib = ps.at("srsn.in.b");
  return nn::conv2d_backward(cache.input, pi.value, g, pi.grad, pib.grad, 1, 1);
}

// Y = B + R(B) with B the bicubic upsample of the clean LR input.
template <class T>
Tensor<T> super_resolve(const ParameterSet<T>& ps, const ModelConfig& cfg,
                        const Tensor<T>& clean_lr, int alpha) {
  if (alpha < 1) throw std::invalid_argument("super_resolve: alpha must be >= 1");
  Tensor<T> b = bicubic_resize_chw(clean_lr, clean_lr.dim(1) * alpha,
                                   clean_lr.dim(2) * alpha, false);
  SrsnCache<T> cache;
  Tensor<T> r = srsn_forward(ps, cfg, b, cache);
  for (std::size_t t = 0; t < b.size(); ++t) b.v[t] += r.v[t];
  return b;
}

// ---- discriminator --------------------------------------------------------

template <class T>
struct DiscCache {
  std::vector<Tensor<T>> inputs;
  std::vector<Tensor<T>> outputs;  // post leaky-relu
  std::vector<T> pooled;
  T prob = 0;
};

template <class T>
T discriminate(const ParameterSet<T>& ps, const ModelConfig& cfg,
               const Tensor<T>& patch, DiscCache<T>& cache) {
  if (patch.dim(1) < 32 || patch.dim(2) < 32)
    throw std::invalid_argument("discriminate: patch smaller than stride (32)");
  cache.inputs.clear();
  cache.outputs.clear();
  Tensor<T> x = patch;
  for (int i = 0; i < 5; ++i) {
    cache.inputs.push_back(x);
    x = nn::conv2d(x, ps.at("disc.conv" + std::to_string(i) + ".w").value,
                   ps.at("disc.conv" + std::to_string(i) + ".b").value, 2, 1);
    nn::leaky_relu_inplace(x, T(0.2));
    cache.outputs.push_back(x);
  }
  cache.pooled = nn::global_avg_pool(x);
  const std::vector<T> logit =
      nn::linear(cache.pooled, ps.at("disc.fc.w").value, ps.at("disc.fc.b").value);
  // clamp away from exact 0/1 so log terms stay finite in float
  cache.prob = std::clamp(T(1) / (T(1) + std::exp(-logit[0])), T(1e-7), T(1) - T(1e-7));
  return cache.prob;
}

// dprob is d(loss)/d(probability); returns d(loss)/d(patch).
template <class T>
Tensor<T> discriminator_backward(ParameterSet<T>& ps, const ModelConfig& cfg,
                                 const DiscCache<T>& cache, T dprob) {
  (void)cfg;
  const T dlogit = dprob * cache.prob * (T(1) - cache.prob);
  auto& pf = ps.at("disc.fc.w");
  auto& pfb = ps.at("disc.fc.b");
  std::vector<T> gp =
      nn::linear_backward(cache.pooled, pf.value, {dlogit}, pf.grad, pfb.grad);
  const Tensor<T>& last = cache.outputs.back();
  Tensor<T> g = nn::global_avg_pool_backward(gp, last.dim(0), last.dim(1), last.dim(2));
  for (int i = 4; i >= 0; --i) {
    nn::leaky_relu_backward_inplace(g, cache.outputs[i], T(0.2));
    auto& pw = ps.at("disc.conv" + std::to_string(i) + ".w");
    auto& pb = ps.at("disc.conv" + std::to_string(i) + ".b");
    g = nn::conv2d_backward(cache.inputs[i], pw.value, g, pw.grad, pb.grad, 2, 1);
  }
  return g;
}

// ---- frozen feature extractor ---------------------------------------------

template <class T>
struct FeatCache {
  std::vector<Tensor<T>> inputs;
  std::vector<Tensor<T>> conv_out;  // post-relu, pre-pool
};

// 4 stages of conv + relu + 2x average pooling; total reduction 16x.
template <class T>
Tensor<T> extract_features(const ParameterSet<T>& ps, const Tensor<T>& img,
                           FeatCache<T>& cache) {
  if (img.dim(1) < 16 || img.dim(2) < 16)
    throw std::invalid_argument("extract_features: input smaller than stride (16)");
  cache.inputs.clear();
  cache.conv_out.clear();
  Tensor<T> x = img;
  for (std::size_t i = 0; i < kFeatureChannels.size(); ++i) {
    cache.inputs.push_back(x);
    x = nn::conv2d(x, ps.at("features.stage" + std::to_string(i) + ".w").value,
                   ps.at("features.stage" + std::to_string(i) + ".b").value, 1, 1);
    nn::relu_inplace(x);
    cache.conv_out.push_back(x);
    x = nn::avg_pool2(x);
  }
  return x;
}

// Input gradient only; the extractor is never trained.
template <class T>
Tensor<T> features_backward(ParameterSet<T>& ps, const FeatCache<T>& cache,
                            const Tensor<T>& dout) {
  Tensor<T> g = dout;
  for (int i = static_cast<int>(kFeatureChannels.size()) - 1; i >= 0; --i) {
    g = nn::avg_pool2_backward(g, cache.conv_out[i].dim(1), cache.conv_out[i].dim(2));
    nn::relu_backward_inplace(g, cache.conv_out[i]);
    auto& pw = ps.at("features.stage" + std::to_string(i) + ".w");
    auto& pb = ps.at("features.stage" + std::to_string(i) + ".b");
    Tensor<T> scratch_w(pw.value.shape);
    Tensor<T> scratch_b(pb.value.shape);
    g = nn::conv2d_backward(cache.inputs[i], pw.value, g, scratch_w, scratch_b, 1, 1);
  }
  return g;
}

}  // namespace dsrvae
