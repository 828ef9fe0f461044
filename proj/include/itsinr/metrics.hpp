#pragma once

// Image quality and noise metrics: PSNR, SSIM, norm-ratio SNR, signed error
// maps, a Haar/MAD noise-level estimator and the paired t-test.

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "itsinr/image.hpp"

namespace itsinr {

/// Returned wherever a ratio has a zero denominator (identical images for
/// PSNR, zero error for SNR). Serialized as "inf".
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct MetricsRecord {
  int iteration = 0;
  double loss = 0.0;
  std::optional<double> psnr_clean;
  std::optional<double> ssim_clean;
  double psnr_noisy = 0.0;
  std::optional<double> sigma_hat;  // 0-255 scale
};

inline double mse(const Image& a, const Image& b) {
  require_same_dims(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// Peak 1.0. Identical inputs return kInfinity.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kInfinity;
  return 10.0 * std::log10(1.0 / m);
}

struct SsimOptions {
  std::size_t window = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

namespace detail {

inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  std::vector<double> k(size);
  const double mid = 0.5 * static_cast<double>(size - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - mid;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable "valid" filtering of an h x w plane.
inline std::vector<double> filter_valid(std::span<const double> plane, std::size_t h,
                                        std::size_t w, std::span<const double> k) {
  const std::size_t n = k.size();
  const std::size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += k[j] * plane[r * w + c + j];
      tmp[r * ow + c] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += k[j] * tmp[(r + j) * ow + c];
      out[r * ow + c] = s;
    }
  }
  return out;
}

}  // namespace detail

/// Mean SSIM over every fully-contained Gaussian window, averaged across
/// channels. Constants assume the [0, 1] dynamic range.
inline double ssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
  require_same_dims(a, b, "ssim");
  const std::size_t h = a.height(), w = a.width(), ch = a.channels();
  if (h < opt.window || w < opt.window) {
    throw std::invalid_argument("ssim: image smaller than the " +
                                std::to_string(opt.window) + "x" +
                                std::to_string(opt.window) + " window");
  }
  const auto kernel = detail::gaussian_kernel(opt.window, opt.window_sigma);
  const double c1 = opt.k1 * opt.k1;
  const double c2 = opt.k2 * opt.k2;

  double total = 0.0;
  std::vector<double> pa(h * w), pb(h * w), paa(h * w), pbb(h * w), pab(h * w);
  for (std::size_t channel = 0; channel < ch; ++channel) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const double x = a.pixels()[i * ch + channel];
      const double y = b.pixels()[i * ch + channel];
      pa[i] = x;
      pb[i] = y;
      paa[i] = x * x;
      pbb[i] = y * y;
      pab[i] = x * y;
    }
    const auto mu_a = detail::filter_valid(pa, h, w, kernel);
    const auto mu_b = detail::filter_valid(pb, h, w, kernel);
    const auto e_aa = detail::filter_valid(paa, h, w, kernel);
    const auto e_bb = detail::filter_valid(pbb, h, w, kernel);
    const auto e_ab = detail::filter_valid(pab, h, w, kernel);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma;
      const double var_b = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(ch);
}

/// ||signal|| / ||error||. Zero error returns kInfinity.
inline double snr(std::span<const double> signal, std::span<const double> error) {
  if (signal.size() != error.size()) throw std::invalid_argument("snr: length mismatch");
  double ss = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    ss += signal[i] * signal[i];
    ee += error[i] * error[i];
  }
  if (ss == 0.0) throw std::invalid_argument("snr: signal is all zero");
  if (ee == 0.0) return kInfinity;
  return std::sqrt(ss) / std::sqrt(ee);
}

/// Signed reconstruction error x_hat - clean, unclamped.
inline Field error_map(const Image& x_hat, const Image& clean) {
  require_same_dims(x_hat, clean, "error_map");
  Field e(clean.height(), clean.width(), clean.channels());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e.values[i] = x_hat.pixels()[i] - clean.pixels()[i];
  }
  return e;
}

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Robust noise level on the 0-255 scale: median absolute value of the
/// one-level orthonormal Haar diagonal detail (HH) band divided by 0.6745.
/// A trailing odd row/column is dropped. Multi-channel fields return the
/// mean of the per-channel estimates.
inline double mad_sigma(const Field& field) {
  if (field.height < 2 || field.width < 2) {
    throw std::invalid_argument("mad_sigma needs a field of at least 2x2");
  }
  const std::size_t bh = field.height / 2, bw = field.width / 2;
  double total = 0.0;
  std::vector<double> detail_abs(bh * bw);
  for (std::size_t ch = 0; ch < field.channels; ++ch) {
    for (std::size_t r = 0; r < bh; ++r) {
      for (std::size_t c = 0; c < bw; ++c) {
        const double a = field.at(2 * r, 2 * c, ch);
        const double b = field.at(2 * r, 2 * c + 1, ch);
        const double d = field.at(2 * r + 1, 2 * c, ch);
        const double e = field.at(2 * r + 1, 2 * c + 1, ch);
        detail_abs[r * bw + c] = std::fabs(0.5 * ((a - b) - (d - e)));
      }
    }
    total += detail::median(detail_abs) / 0.6745;
  }
  return 255.0 * total / static_cast<double>(field.channels);
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
  std::size_t n = 0;
};

/// Two-sided paired t-test of a against b (d = a - b, n - 1 dof).
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need n >= 2 pairs");
  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult res;
  res.n = n;
  res.mean_diff = mean;
  if (sd == 0.0) {
    if (mean == 0.0) return res;  // t = 0, p = 1
    res.t = mean > 0.0 ? kInfinity : -kInfinity;
    res.p = 0.0;
    return res;
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double dof = static_cast<double>(n - 1);
  // P(|T| >= |t|) = I_{dof / (dof + t^2)}(dof / 2, 1 / 2)
  res.p = boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + res.t * res.t));
  return res;
}

}  // namespace itsinr
