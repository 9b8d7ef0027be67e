#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsrvae/image.hpp"

namespace dsrvae {

// Identical images report this instead of infinity.
inline constexpr double kPsnrCap = 100.0;

enum class PsnrChannel { luma, rgb };

struct MetricRow {
  std::string name;
  double psnr_y = 0.0;
  double psnr_rgb = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_psnr_y = 0.0;
  double mean_psnr_rgb = 0.0;
  double mean_ssim = 0.0;
};

namespace detail {

template <class T>
void check_same_dims(const BasicImage<T>& a, const BasicImage<T>& b,
                     const char* what) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace detail

// PSNR against a [0,1] peak; inputs clamped at entry (metrics model the
// 8-bit viewing pipeline, unlike training losses which never clamp).
template <class T>
double psnr(const BasicImage<T>& a, const BasicImage<T>& b,
            PsnrChannel channel = PsnrChannel::luma) {
  detail::check_same_dims(a, b, "psnr");
  double mse = 0.0;
  std::size_t n = 0;
  if (channel == PsnrChannel::rgb) {
    for (std::size_t i = 0; i < a.v.size(); ++i) {
      const double d = detail::clamp01(static_cast<double>(a.v[i])) -
                       detail::clamp01(static_cast<double>(b.v[i]));
      mse += d * d;
    }
    n = a.v.size();
  } else {
    for (std::size_t i = 0; i < a.pixels(); ++i) {
      const double ya = 0.299 * detail::clamp01(a.plane(0)[i]) +
                        0.587 * detail::clamp01(a.plane(1)[i]) +
                        0.114 * detail::clamp01(a.plane(2)[i]);
      const double yb = 0.299 * detail::clamp01(b.plane(0)[i]) +
                        0.587 * detail::clamp01(b.plane(1)[i]) +
                        0.114 * detail::clamp01(b.plane(2)[i]);
      const double d = ya - yb;
      mse += d * d;
    }
    n = a.pixels();
  }
  mse /= static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Luma-channel SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1. Mean over windows fully inside the image.
template <class T>
double ssim(const BasicImage<T>& a, const BasicImage<T>& b) {
  detail::check_same_dims(a, b, "ssim");
  constexpr int win = 11;
  if (a.height < win || a.width < win)
    throw std::invalid_argument("ssim: image smaller than 11x11 window");

  // window weights
  static const std::vector<double> wv = [] {
    std::vector<double> w(win * win);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int y = 0; y < win; ++y)
      for (int x = 0; x < win; ++x) {
        const double dy = y - win / 2, dx = x - win / 2;
        w[y * win + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        sum += w[y * win + x];
      }
    for (auto& e : w) e /= sum;
    return w;
  }();

  const int h = a.height, w = a.width;
  std::vector<double> la(a.pixels()), lb(a.pixels());
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    la[i] = 0.299 * detail::clamp01(a.plane(0)[i]) +
            0.587 * detail::clamp01(a.plane(1)[i]) +
            0.114 * detail::clamp01(a.plane(2)[i]);
    lb[i] = 0.299 * detail::clamp01(b.plane(0)[i]) +
            0.587 * detail::clamp01(b.plane(1)[i]) +
            0.114 * detail::clamp01(b.plane(2)[i]);
  }

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + win <= h; ++y0) {
    for (int x0 = 0; x0 + win <= w; ++x0) {
      double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          const double wt = wv[y * win + x];
          const double pa = la[(y0 + y) * static_cast<std::size_t>(w) + x0 + x];
          const double pb = lb[(y0 + y) * static_cast<std::size_t>(w) + x0 + x];
          ma += wt * pa;
          mb += wt * pb;
          va += wt * pa * pa;
          vb += wt * pb * pb;
          cov += wt * pa * pb;
        }
      va -= ma * ma;
      vb -= mb * mb;
      cov -= ma * mb;
      const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// Per-file metrics over directories with matching filenames; see cli module
// for the directory-walking wrapper. Here the caller supplies loaded pairs.
template <class T>
MetricReport evaluate_pairs(
    const std::vector<std::pair<std::string, std::pair<BasicImage<T>, BasicImage<T>>>>&
        pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_pairs: empty corpus");
  MetricReport rep;
  for (const auto& [name, imgs] : pairs) {
    MetricRow row;
    row.name = name;
    row.psnr_y = psnr(imgs.first, imgs.second, PsnrChannel::luma);
    row.psnr_rgb = psnr(imgs.first, imgs.second, PsnrChannel::rgb);
    row.ssim = ssim(imgs.first, imgs.second);
    rep.mean_psnr_y += row.psnr_y;
    rep.mean_psnr_rgb += row.psnr_rgb;
    rep.mean_ssim += row.ssim;
    rep.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(rep.rows.size());
  rep.mean_psnr_y /= n;
  rep.mean_psnr_rgb /= n;
  rep.mean_ssim /= n;
  return rep;
}

}  // namespace dsrvae
