#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "dsrvae/nn/networks.hpp"
#include "dsrvae/resize.hpp"

namespace dsrvae {

template <class T>
struct LossWeights {
  T lambda_feat = T(1.0);   // feature-loss weight
  T eta_adv = T(5e-3);      // adversarial weight
  T kl_weight = T(0.1);     // KL scaling in the DAE objective
};

template <class T>
struct LossBreakdown {
  T kl = 0;
  T reconstruction = 0;
  T cycle_lowfreq = 0;
  T cycle_backproj = 0;
  T feature = 0;
  T adversarial = 0;
  T total = 0;
};

namespace detail {

template <class T>
void check_finite(T x, const char* what) {
  if (!std::isfinite(static_cast<double>(x)))
    throw std::invalid_argument(std::string(what) + ": non-finite value");
}

}  // namespace detail

template <class T>
T mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mean_abs_diff: shape mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.v[i] - b.v[i]);
  return acc / static_cast<T>(a.size());
}

// d/da of mean|a-b|; zero at ties.
template <class T>
Tensor<T> mean_abs_diff_grad(const Tensor<T>& a, const Tensor<T>& b, T scale = T(1)) {
  Tensor<T> g(a.shape);
  const T s = scale / static_cast<T>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.v[i] - b.v[i];
    g.v[i] = d > T(0) ? s : (d < T(0) ? -s : T(0));
  }
  return g;
}

// KL(q || N(0,I)) in closed form: 0.5 * sum(exp(lv) + m^2 - 1 - lv).
template <class T>
T kl_divergence(const LatentDistribution<T>& dist) {
  T acc = 0;
  for (std::size_t i = 0; i < dist.mean.size(); ++i) {
    const T m = dist.mean[i];
    const T lv = dist.log_variance[i];
    detail::check_finite(m, "kl_divergence mean");
    detail::check_finite(lv, "kl_divergence log_variance");
    acc += std::exp(lv) + m * m - T(1) - lv;
  }
  return T(0.5) * acc;
}

// Gradients of kl_divergence, scaled by `scale`, added in place.
template <class T>
void kl_divergence_grad(const LatentDistribution<T>& dist, T scale,
                        std::vector<T>& dmean, std::vector<T>& dlogvar) {
  for (std::size_t i = 0; i < dist.mean.size(); ++i) {
    dmean[i] += scale * dist.mean[i];
    dlogvar[i] += scale * T(0.5) * (std::exp(dist.log_variance[i]) - T(1));
  }
}

// DAE objective: MAE reconstruction (Laplace observation model) + weighted KL.
template <class T>
LossBreakdown<T> dae_loss(const Tensor<T>& denoised, const Tensor<T>& clean_target,
                          const LatentDistribution<T>& dist,
                          const LossWeights<T>& weights) {
  LossBreakdown<T> out;
  out.reconstruction = mean_abs_diff(denoised, clean_target);
  out.kl = kl_divergence(dist);
  out.total = out.reconstruction + weights.kl_weight * out.kl;
  return out;
}

// Numerically guarded log for the Eq.-style generator term.
template <class T>
T adversarial_loss_generator(T d_fake) {
  if (!(d_fake > T(0) && d_fake < T(1)))
    throw std::invalid_argument("adversarial_loss_generator: d_fake outside (0,1)");
  return std::log(std::max(T(1) - d_fake, T(1e-7)));
}

template <class T>
T discriminator_loss(T d_real, T d_fake) {
  if (!(d_real > T(0) && d_real < T(1)) || !(d_fake > T(0) && d_fake < T(1)))
    throw std::invalid_argument("discriminator_loss: probability outside (0,1)");
  return -(std::log(std::max(d_real, T(1e-7))) +
           std::log(std::max(T(1) - d_fake, T(1e-7))));
}

// total = lambda*feature + eta*adversarial + cycle terms; parts stored unweighted.
template <class T>
LossBreakdown<T> total_generator_loss(T cycle_lowfreq, T cycle_backproj, T feature,
                                      T adversarial, const LossWeights<T>& weights) {
  for (T c : {cycle_lowfreq, cycle_backproj, feature, adversarial})
    detail::check_finite(c, "total_generator_loss");
  LossBreakdown<T> out;
  out.cycle_lowfreq = cycle_lowfreq;
  out.cycle_backproj = cycle_backproj;
  out.feature = feature;
  out.adversarial = adversarial;
  out.total = weights.lambda_feat * feature + weights.eta_adv * adversarial +
              cycle_lowfreq + cycle_backproj;
  return out;
}

// Cycle objective over arbitrary SR / denoiser handles (forward only; the
// training loop carries its own differentiated pipeline).
//   Y = f(g(X));  lowfreq = mean|s(Y) - g(X)|;  backproj = mean|Y - f(s(Y))|
template <class T>
struct CycleResult {
  T cycle_lowfreq = 0;
  T cycle_backproj = 0;
  Tensor<T> sr;  // Y
};

template <class T>
CycleResult<T> cycle_loss(const Tensor<T>& x,
                          const std::function<Tensor<T>(const Tensor<T>&)>& srsn,
                          const std::function<Tensor<T>(const Tensor<T>&)>& dae,
                          int alpha) {
  if (alpha < 1) throw std::invalid_argument("cycle_loss: alpha must be >= 1");
  CycleResult<T> out;
  Tensor<T> g = dae(x);
  out.sr = srsn(g);
  Tensor<T> down = bicubic_resize_chw(out.sr, g.dim(1), g.dim(2), true);
  out.cycle_lowfreq = mean_abs_diff(down, g);
  Tensor<T> backproj = srsn(down);
  out.cycle_backproj = mean_abs_diff(out.sr, backproj);
  return out;
}

// mean | down_by_alpha(features(sr)) - features(denoised_lr) |
template <class T>
T feature_loss(const Tensor<T>& sr, const Tensor<T>& denoised_lr,
               const std::function<Tensor<T>(const Tensor<T>&)>& extractor,
               int alpha) {
  if (sr.dim(1) != denoised_lr.dim(1) * alpha || sr.dim(2) != denoised_lr.dim(2) * alpha)
    throw std::invalid_argument("feature_loss: sr dims must be alpha x lr dims");
  Tensor<T> fs = extractor(sr);
  Tensor<T> fl = extractor(denoised_lr);
  Tensor<T> fsd = bicubic_resize_chw(fs, fl.dim(1), fl.dim(2), true);
  return mean_abs_diff(fsd, fl);
}

}  // namespace dsrvae
