#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsrvae/image.hpp"
#include "dsrvae/rng.hpp"
#include "dsrvae/tensor.hpp"

namespace dsrvae {

template <class T>
Tensor<T> image_to_tensor(const BasicImage<T>& img) {
  Tensor<T> t({3, img.height, img.width});
  std::copy(img.v.begin(), img.v.end(), t.v.begin());
  return t;
}

template <class T>
BasicImage<T> tensor_to_image(const Tensor<T>& t) {
  if (t.shape.size() != 3 || t.dim(0) != 3)
    throw std::invalid_argument("tensor_to_image: expected {3,H,W}");
  BasicImage<T> img(t.dim(1), t.dim(2));
  std::copy(t.v.begin(), t.v.end(), img.v.begin());
  return img;
}

// One named parameter array plus its gradient and Adam state.
template <class T>
struct Param {
  std::string name;
  std::string owner;  // encoder | decoder | srsn | discriminator | features
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m;
  Tensor<T> adam_v;
};

template <class T>
class ParameterSet {
 public:
  Param<T>& add(const std::string& name, const std::string& owner,
                std::vector<int> shape) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param: " + name);
    Param<T> p;
    p.name = name;
    p.owner = owner;
    p.value = Tensor<T>(shape);
    p.grad = Tensor<T>(shape);
    p.adam_m = Tensor<T>(shape);
    p.adam_v = Tensor<T>(std::move(shape));
    index_[name] = items_.size();
    items_.push_back(std::move(p));
    return items_.back();
  }

  Param<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such param: " + name);
    return items_[it->second];
  }
  const Param<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such param: " + name);
    return items_[it->second];
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Param<T>>& items() { return items_; }
  const std::vector<Param<T>>& items() const { return items_; }

  void zero_grads() {
    for (auto& p : items_) p.grad.fill(T(0));
  }

  std::size_t total_count(const std::string& owner = "") const {
    std::size_t n = 0;
    for (const auto& p : items_)
      if (owner.empty() || p.owner == owner) n += p.value.size();
    return n;
  }

 private:
  std::vector<Param<T>> items_;
  std::map<std::string, std::size_t> index_;
};

namespace nn {

// ---- padding helpers ------------------------------------------------------

template <class T>
Tensor<T> zero_pad(const Tensor<T>& x, int p) {
  if (p == 0) return x;
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<T> out({c, h + 2 * p, w + 2 * p});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      std::memcpy(out.data() + ((static_cast<std::size_t>(ci) * (h + 2 * p) + y + p) *
                                    (w + 2 * p) +
                                p),
                  x.data() + (static_cast<std::size_t>(ci) * h + y) * w,
                  sizeof(T) * w);
  return out;
}

template <class T>
Tensor<T> unpad(const Tensor<T>& x, int p) {
  if (p == 0) return x;
  const int c = x.dim(0), ph = x.dim(1), pw = x.dim(2);
  const int h = ph - 2 * p, w = pw - 2 * p;
  Tensor<T> out({c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      std::memcpy(out.data() + (static_cast<std::size_t>(ci) * h + y) * w,
                  x.data() +
                      ((static_cast<std::size_t>(ci) * ph + y + p) * pw + p),
                  sizeof(T) * w);
  return out;
}

// ---- convolution ----------------------------------------------------------

// weight {Co,Ci,K,K}, bias {Co}; output {(Co, (H+2p-K)/s+1, (W+2p-K)/s+1)}
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  const int ci = x.dim(0), h = x.dim(1), wid = x.dim(2);
  const int co = w.dim(0), k = w.dim(2);
  if (w.dim(1) != ci) throw std::invalid_argument("conv2d: channel mismatch");
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wid + 2 * pad - k) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: input too small");

  const Tensor<T> xp = zero_pad(x, pad);
  const int ph = h + 2 * pad, pw = wid + 2 * pad;
  Tensor<T> out({co, oh, ow});
  for (int o = 0; o < co; ++o) {
    T* oplane = out.data() + static_cast<std::size_t>(o) * oh * ow;
    std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, b[o]);
  }
  for (int o = 0; o < co; ++o) {
    T* oplane = out.data() + static_cast<std::size_t>(o) * oh * ow;
    for (int i = 0; i < ci; ++i) {
      const T* iplane = xp.data() + static_cast<std::size_t>(i) * ph * pw;
      const T* wk = w.data() + ((static_cast<std::size_t>(o) * ci + i) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          if (wv == T(0)) continue;
          for (int oy = 0; oy < oh; ++oy) {
            const T* src = iplane + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
            T* dst = oplane + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) dst[ox] += wv * src[ox * stride];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates dW and db into grad tensors, returns dX.
template <class T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& gout, Tensor<T>& gw, Tensor<T>& gb,
                          int stride, int pad) {
  const int ci = x.dim(0), h = x.dim(1), wid = x.dim(2);
  const int co = w.dim(0), k = w.dim(2);
  const int oh = gout.dim(1), ow = gout.dim(2);
  const Tensor<T> xp = zero_pad(x, pad);
  const int ph = h + 2 * pad, pw = wid + 2 * pad;
  Tensor<T> gxp({ci, ph, pw});

  for (int o = 0; o < co; ++o) {
    const T* gplane = gout.data() + static_cast<std::size_t>(o) * oh * ow;
    T gbacc = 0;
    for (std::size_t t = 0; t < static_cast<std::size_t>(oh) * ow; ++t)
      gbacc += gplane[t];
    gb[o] += gbacc;
    for (int i = 0; i < ci; ++i) {
      const T* iplane = xp.data() + static_cast<std::size_t>(i) * ph * pw;
      T* gxplane = gxp.data() + static_cast<std::size_t>(i) * ph * pw;
      const T* wk = w.data() + ((static_cast<std::size_t>(o) * ci + i) * k) * k;
      T* gwk = gw.data() + ((static_cast<std::size_t>(o) * ci + i) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          T gwacc = 0;
          for (int oy = 0; oy < oh; ++oy) {
            const T* src = iplane + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
            T* gdst = gxplane + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
            const T* g = gplane + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              gwacc += g[ox] * src[ox * stride];
              gdst[ox * stride] += wv * g[ox];
            }
          }
          gwk[ky * k + kx] += gwacc;
        }
      }
    }
  }
  return unpad(gxp, pad);
}

// ---- transposed convolution ----------------------------------------------

// weight {Ci,Co,K,K}; output {(Co, (H-1)s - 2p + K, (W-1)s - 2p + K)}
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, int stride, int pad) {
  const int ci = x.dim(0), h = x.dim(1), wid = x.dim(2);
  const int co = w.dim(1), k = w.dim(2);
  if (w.dim(0) != ci) throw std::invalid_argument("conv_transpose2d: channel mismatch");
  const int fh = (h - 1) * stride + k;  // before crop
  const int fw = (wid - 1) * stride + k;
  Tensor<T> full({co, fh, fw});
  for (int i = 0; i < ci; ++i) {
    const T* iplane = x.data() + static_cast<std::size_t>(i) * h * wid;
    for (int o = 0; o < co; ++o) {
      T* oplane = full.data() + static_cast<std::size_t>(o) * fh * fw;
      const T* wk = w.data() + ((static_cast<std::size_t>(i) * co + o) * k) * k;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          if (wv == T(0)) continue;
          for (int iy = 0; iy < h; ++iy) {
            const T* src = iplane + static_cast<std::size_t>(iy) * wid;
            T* dst = oplane + static_cast<std::size_t>(iy * stride + ky) * fw + kx;
            for (int ix = 0; ix < wid; ++ix) dst[ix * stride] += wv * src[ix];
          }
        }
    }
  }
  Tensor<T> out = unpad(full, pad);
  const int oh = out.dim(1), ow = out.dim(2);
  for (int o = 0; o < co; ++o) {
    T* oplane = out.data() + static_cast<std::size_t>(o) * oh * ow;
    for (std::size_t t = 0; t < static_cast<std::size_t>(oh) * ow; ++t)
      oplane[t] += b[o];
  }
  return out;
}

template <class T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                                    const Tensor<T>& gout, Tensor<T>& gw,
                                    Tensor<T>& gb, int stride, int pad) {
  const int ci = x.dim(0), h = x.dim(1), wid = x.dim(2);
  const int co = w.dim(1), k = w.dim(2);
  const Tensor<T> gfull = zero_pad(gout, pad);
  const int fh = gfull.dim(1), fw = gfull.dim(2);
  Tensor<T> gx({ci, h, wid});

  const int oh = gout.dim(1), ow = gout.dim(2);
  for (int o = 0; o < co; ++o) {
    const T* gplane = gout.data() + static_cast<std::size_t>(o) * oh * ow;
    T gbacc = 0;
    for (std::size_t t = 0; t < static_cast<std::size_t>(oh) * ow; ++t)
      gbacc += gplane[t];
    gb[o] += gbacc;
  }
  for (int i = 0; i < ci; ++i) {
    const T* iplane = x.data() + static_cast<std::size_t>(i) * h * wid;
    T* gxplane = gx.data() + static_cast<std::size_t>(i) * h * wid;
    for (int o = 0; o < co; ++o) {
      const T* gfplane = gfull.data() + static_cast<std::size_t>(o) * fh * fw;
      const T* wk = w.data() + ((static_cast<std::size_t>(i) * co + o) * k) * k;
      T* gwk = gw.data() + ((static_cast<std::size_t>(i) * co + o) * k) * k;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          T gwacc = 0;
          for (int iy = 0; iy < h; ++iy) {
            const T* src = iplane + static_cast<std::size_t>(iy) * wid;
            T* gdst = gxplane + static_cast<std::size_t>(iy) * wid;
            const T* g = gfplane + static_cast<std::size_t>(iy * stride + ky) * fw + kx;
            for (int ix = 0; ix < wid; ++ix) {
              gwacc += g[ix * stride] * src[ix];
              gdst[ix] += wv * g[ix * stride];
            }
          }
          gwk[ky * k + kx] += gwacc;
        }
    }
  }
  return gx;
}

// ---- elementwise / pooling / linear ---------------------------------------

template <class T>
void relu_inplace(Tensor<T>& x) {
  for (auto& e : x.v) e = e > T(0) ? e : T(0);
}

// grad through relu given the post-activation values
template <class T>
void relu_backward_inplace(Tensor<T>& g, const Tensor<T>& post) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (post.v[i] <= T(0)) g.v[i] = T(0);
}

template <class T>
void leaky_relu_inplace(Tensor<T>& x, T slope) {
  for (auto& e : x.v) e = e > T(0) ? e : slope * e;
}

template <class T>
void leaky_relu_backward_inplace(Tensor<T>& g, const Tensor<T>& post, T slope) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (post.v[i] <= T(0)) g.v[i] *= slope;
}

template <class T>
std::vector<T> global_avg_pool(const Tensor<T>& x) {
  const int c = x.dim(0);
  const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  std::vector<T> out(c, T(0));
  for (int i = 0; i < c; ++i) {
    const T* p = x.data() + i * hw;
    T acc = 0;
    for (std::size_t t = 0; t < hw; ++t) acc += p[t];
    out[i] = acc / static_cast<T>(hw);
  }
  return out;
}

template <class T>
Tensor<T> global_avg_pool_backward(const std::vector<T>& gout, int c, int h, int w) {
  Tensor<T> g({c, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < c; ++i) {
    const T gv = gout[i] / static_cast<T>(hw);
    T* p = g.data() + i * hw;
    std::fill(p, p + hw, gv);
  }
  return g;
}

// 2x2 average pooling, stride 2; input dims must be even.
template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw std::invalid_argument("avg_pool2: odd input dims");
  Tensor<T> out({c, h / 2, w / 2});
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h / 2; ++y)
      for (int x2 = 0; x2 < w / 2; ++x2) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * h + 2 * y) * w + 2 * x2;
        out.data()[(static_cast<std::size_t>(i) * (h / 2) + y) * (w / 2) + x2] =
            T(0.25) * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  return out;
}

template <class T>
Tensor<T> avg_pool2_backward(const Tensor<T>& gout, int h, int w) {
  const int c = gout.dim(0);
  Tensor<T> g({c, h, w});
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h / 2; ++y)
      for (int x2 = 0; x2 < w / 2; ++x2) {
        const T gv =
            T(0.25) *
            gout.data()[(static_cast<std::size_t>(i) * (h / 2) + y) * (w / 2) + x2];
        T* p = g.data() + (static_cast<std::size_t>(i) * h + 2 * y) * w + 2 * x2;
        p[0] += gv;
        p[1] += gv;
        p[w] += gv;
        p[w + 1] += gv;
      }
  return g;
}

// weight {Out,In}, bias {Out}
template <class T>
std::vector<T> linear(const std::vector<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int out = w.dim(0), in = w.dim(1);
  if (static_cast<int>(x.size()) != in)
    throw std::invalid_argument("linear: input length mismatch");
  std::vector<T> y(out);
  for (int o = 0; o < out; ++o) {
    T acc = b[o];
    const T* wr = w.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
  return y;
}

template <class T>
std::vector<T> linear_backward(const std::vector<T>& x, const Tensor<T>& w,
                               const std::vector<T>& gout, Tensor<T>& gw,
                               Tensor<T>& gb) {
  const int out = w.dim(0), in = w.dim(1);
  std::vector<T> gx(in, T(0));
  for (int o = 0; o < out; ++o) {
    gb[o] += gout[o];
    const T* wr = w.data() + static_cast<std::size_t>(o) * in;
    T* gwr = gw.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      gwr[i] += gout[o] * x[i];
      gx[i] += wr[i] * gout[o];
    }
  }
  return gx;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_channels: spatial mismatch");
  Tensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

// He fan-in initialization.
template <class T>
void he_init(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& e : w.v) e = static_cast<T>(s * rng.normal());
}

}  // namespace nn
}  // namespace dsrvae
