#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dsrvae/image.hpp"
#include "dsrvae/tensor.hpp"

namespace dsrvae {

// Cubic convolution kernel, a = -0.5 (Catmull-Rom convention).
inline double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Per-axis resampling taps. Source indices are clamped to the valid range
// (replicate border) and weights normalized to sum 1 per output sample.
template <class T>
struct AxisPlan {
  int in = 0, out = 0;
  std::vector<int> offset;  // out+1 entries into idx/w
  std::vector<int> idx;
  std::vector<T> w;

  static AxisPlan build(int in, int out, bool antialias) {
    if (in < 1 || out < 1) throw std::invalid_argument("resample dims must be >= 1");
    AxisPlan p;
    p.in = in;
    p.out = out;
    p.offset.reserve(out + 1);
    p.offset.push_back(0);
    const double scale = static_cast<double>(out) / in;
    const double filt_scale = (antialias && scale < 1.0) ? scale : 1.0;
    const double support = 2.0 / filt_scale;
    for (int o = 0; o < out; ++o) {
      const double src = (o + 0.5) / scale - 0.5;
      const int lo = static_cast<int>(std::ceil(src - support));
      const int hi = static_cast<int>(std::floor(src + support));
      double sum = 0.0;
      std::vector<std::pair<int, double>> taps;
      for (int i = lo; i <= hi; ++i) {
        const double wt = cubic_weight((i - src) * filt_scale);
        if (wt == 0.0) continue;
        taps.emplace_back(std::clamp(i, 0, in - 1), wt);
        sum += wt;
      }
      for (auto& [si, wt] : taps) {
        p.idx.push_back(si);
        p.w.push_back(static_cast<T>(wt / sum));
      }
      p.offset.push_back(static_cast<int>(p.idx.size()));
    }
    return p;
  }
};

template <class T>
struct ResamplePlan {
  AxisPlan<T> row;  // vertical (height) axis
  AxisPlan<T> col;  // horizontal (width) axis

  static ResamplePlan build(int in_h, int in_w, int out_h, int out_w, bool antialias) {
    ResamplePlan p;
    p.row = AxisPlan<T>::build(in_h, out_h, antialias);
    p.col = AxisPlan<T>::build(in_w, out_w, antialias);
    return p;
  }
};

namespace detail {

// Horizontal pass: (h, in_w) -> (h, out_w)
template <class T>
void resample_rows(const T* in, int h, int in_w, T* out, const AxisPlan<T>& p) {
  for (int y = 0; y < h; ++y) {
    const T* src = in + static_cast<std::size_t>(y) * in_w;
    T* dst = out + static_cast<std::size_t>(y) * p.out;
    for (int o = 0; o < p.out; ++o) {
      T acc = 0;
      for (int k = p.offset[o]; k < p.offset[o + 1]; ++k)
        acc += p.w[k] * src[p.idx[k]];
      dst[o] = acc;
    }
  }
}

// Vertical pass: (in_h, w) -> (out_h, w)
template <class T>
void resample_cols(const T* in, int in_h, int w, T* out, const AxisPlan<T>& p) {
  for (int o = 0; o < p.out; ++o) {
    T* dst = out + static_cast<std::size_t>(o) * w;
    std::fill(dst, dst + w, T(0));
    for (int k = p.offset[o]; k < p.offset[o + 1]; ++k) {
      const T* src = in + static_cast<std::size_t>(p.idx[k]) * w;
      const T wt = p.w[k];
      for (int x = 0; x < w; ++x) dst[x] += wt * src[x];
    }
  }
}

// Transposed horizontal pass: scatter (h, out_w) grads back to (h, in_w).
template <class T>
void resample_rows_t(const T* gout, int h, T* gin, int in_w, const AxisPlan<T>& p) {
  for (int y = 0; y < h; ++y) {
    const T* src = gout + static_cast<std::size_t>(y) * p.out;
    T* dst = gin + static_cast<std::size_t>(y) * in_w;
    for (int o = 0; o < p.out; ++o)
      for (int k = p.offset[o]; k < p.offset[o + 1]; ++k)
        dst[p.idx[k]] += p.w[k] * src[o];
  }
}

template <class T>
void resample_cols_t(const T* gout, int w, T* gin, const AxisPlan<T>& p) {
  for (int o = 0; o < p.out; ++o) {
    const T* src = gout + static_cast<std::size_t>(o) * w;
    for (int k = p.offset[o]; k < p.offset[o + 1]; ++k) {
      T* dst = gin + static_cast<std::size_t>(p.idx[k]) * w;
      const T wt = p.w[k];
      for (int x = 0; x < w; ++x) dst[x] += wt * src[x];
    }
  }
}

template <class T>
void resample_plane(const T* in, int in_h, int in_w, T* out, const ResamplePlan<T>& p) {
  std::vector<T> tmp(static_cast<std::size_t>(in_h) * p.col.out);
  resample_rows(in, in_h, in_w, tmp.data(), p.col);
  resample_cols(tmp.data(), in_h, p.col.out, out, p.row);
}

template <class T>
void resample_plane_t(const T* gout, T* gin, int in_h, int in_w, const ResamplePlan<T>& p) {
  std::vector<T> tmp(static_cast<std::size_t>(in_h) * p.col.out, T(0));
  resample_cols_t(gout, p.col.out, tmp.data(), p.row);
  resample_rows_t(tmp.data(), in_h, gin, in_w, p.col);
}

}  // namespace detail

template <class T>
BasicImage<T> bicubic_resize_to(const BasicImage<T>& img, int out_h, int out_w,
                                bool antialias) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bicubic_resize: output dims must be >= 1");
  auto plan = ResamplePlan<T>::build(img.height, img.width, out_h, out_w, antialias);
  BasicImage<T> out(out_h, out_w);
  for (int c = 0; c < 3; ++c)
    detail::resample_plane(img.plane(c), img.height, img.width, out.plane(c), plan);
  return out;
}

template <class T>
BasicImage<T> bicubic_resize(const BasicImage<T>& img, double scale, bool antialias) {
  if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be > 0");
  const int out_h = static_cast<int>(std::lround(img.height * scale));
  const int out_w = static_cast<int>(std::lround(img.width * scale));
  return bicubic_resize_to(img, out_h, out_w, antialias);
}

// {C,H,W} tensor resize; used for feature maps and for gradient flow
// through the down-sampling operator inside the losses.
template <class T>
Tensor<T> bicubic_resize_chw(const Tensor<T>& x, int out_h, int out_w, bool antialias) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto plan = ResamplePlan<T>::build(h, w, out_h, out_w, antialias);
  Tensor<T> out({c, out_h, out_w});
  for (int i = 0; i < c; ++i)
    detail::resample_plane(x.data() + static_cast<std::size_t>(i) * h * w, h, w,
                           out.data() + static_cast<std::size_t>(i) * out_h * out_w, plan);
  return out;
}

// Transpose of bicubic_resize_chw: maps output-side grads to input-side grads.
template <class T>
Tensor<T> bicubic_resize_chw_backward(const Tensor<T>& grad_out, int in_h, int in_w,
                                      bool antialias) {
  const int c = grad_out.dim(0), oh = grad_out.dim(1), ow = grad_out.dim(2);
  auto plan = ResamplePlan<T>::build(in_h, in_w, oh, ow, antialias);
  Tensor<T> gin({c, in_h, in_w});
  for (int i = 0; i < c; ++i)
    detail::resample_plane_t(grad_out.data() + static_cast<std::size_t>(i) * oh * ow,
                             gin.data() + static_cast<std::size_t>(i) * in_h * in_w,
                             in_h, in_w, plan);
  return gin;
}

}  // namespace dsrvae
