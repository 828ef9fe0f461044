#pragma once

// Numerical checks of the supervision-substitution SNR bound on synthetic
// vectors: y = x + n, x_hat = x + e with ||e|| = delta ||n||, and
// y_next = (y + x_hat) / 2. The claim under test is
//   SNR(y_next) >= 2 / (1 + delta) * SNR(y) > SNR(y)   for 0 < delta < 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "itsinr/image.hpp"
#include "itsinr/metrics.hpp"

namespace itsinr::snrlab {

// Relative slack allowed when comparing against the closed-form bound.
inline constexpr double kBoundTolerance = 1e-12;

struct TheoremTrial {
  std::vector<double> x, n, e;
  double delta = 0.0;
  double snr_y = 0.0;
  double snr_y_next = 0.0;
  double bound = 0.0;

  double ratio() const { return snr_y_next / snr_y; }
  bool improves() const { return snr_y_next > snr_y; }
  bool meets_bound() const { return snr_y_next >= bound * (1.0 - kBoundTolerance); }
};

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

/// Evaluates one substitution step. delta is measured as ||e|| / ||n||.
inline TheoremTrial evaluate_trial(std::vector<double> x, std::vector<double> n,
                                   std::vector<double> e) {
  if (x.size() != n.size() || x.size() != e.size()) {
    throw std::invalid_argument("evaluate_trial: vector length mismatch");
  }
  const std::size_t dim = x.size();
  std::vector<double> y(dim), y_next(dim), err_y(dim), err_next(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    y[i] = x[i] + n[i];
    const double x_hat = x[i] + e[i];
    y_next[i] = 0.5 * (y[i] + x_hat);
    err_y[i] = y[i] - x[i];
    err_next[i] = y_next[i] - x[i];
  }
  TheoremTrial t;
  t.delta = norm(e) / norm(n);
  t.snr_y = snr(x, err_y);
  t.snr_y_next = snr(x, err_next);
  t.bound = 2.0 / (1.0 + t.delta) * t.snr_y;
  t.x = std::move(x);
  t.n = std::move(n);
  t.e = std::move(e);
  return t;
}

namespace detail {

inline std::vector<double> gaussian_vector(std::size_t dim, Prng& rng) {
  std::vector<double> v(dim);
  for (double& a : v) a = rng.normal();
  return v;
}

inline void rescale_to(std::vector<double>& v, double target_norm) {
  const double s = target_norm / norm(v);
  for (double& a : v) a *= s;
}

}  // namespace detail

/// Draws x, n, e isotropically for one trial; e is rescaled so that
/// ||e|| = delta ||n||. Trial streams are split from the seed.
inline TheoremTrial draw_trial(std::size_t dim, double delta, std::uint64_t seed,
                               std::uint64_t trial) {
  Prng rng(derive_seed(seed, trial));
  auto x = detail::gaussian_vector(dim, rng);
  auto n = detail::gaussian_vector(dim, rng);
  auto e = detail::gaussian_vector(dim, rng);
  detail::rescale_to(e, delta * norm(n));
  return evaluate_trial(std::move(x), std::move(n), std::move(e));
}

struct Theorem1Report {
  std::size_t trials = 0;
  std::size_t improved = 0;          // trials with SNR(y_next) > SNR(y)
  std::size_t bound_violations = 0;  // trials below 2/(1+delta) SNR(y)
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
  double bound_ratio = 0.0;       // 2 / (1 + delta)
  double min_bound_slack = std::numeric_limits<double>::infinity();  // min ratio/bound - 1
  bool all_hold = false;

  double hold_fraction() const {
    return trials ? static_cast<double>(improved) / static_cast<double>(trials) : 0.0;
  }
};

inline void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1)");
  }
}

inline Theorem1Report run_theorem1(std::size_t dim, double delta, std::size_t trials,
                                   std::uint64_t seed) {
  check_delta(delta);
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  Theorem1Report rep;
  rep.trials = trials;
  rep.bound_ratio = 2.0 / (1.0 + delta);
  for (std::size_t k = 0; k < trials; ++k) {
    const TheoremTrial t = draw_trial(dim, delta, seed, k);
    if (t.improves()) ++rep.improved;
    if (!t.meets_bound()) ++rep.bound_violations;
    const double r = t.ratio();
    rep.min_ratio = std::min(rep.min_ratio, r);
    rep.max_ratio = std::max(rep.max_ratio, r);
    rep.min_bound_slack = std::min(rep.min_bound_slack, t.snr_y_next / t.bound - 1.0);
  }
  rep.all_hold = rep.improved == trials && rep.bound_violations == 0;
  return rep;
}

struct RemarkReport {
  double worst_ratio = 0.0;  // x_hat = y
  double best_ratio = 0.0;   // x_hat = x
  double snr_y = 0.0;
};

inline RemarkReport run_remark_cases(std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  Prng rng(seed);
  auto x = detail::gaussian_vector(dim, rng);
  auto n = detail::gaussian_vector(dim, rng);
  RemarkReport rep;
  const TheoremTrial worst = evaluate_trial(x, n, n);  // e = n  <=>  x_hat = y
  const TheoremTrial best = evaluate_trial(x, n, std::vector<double>(dim, 0.0));
  rep.worst_ratio = worst.ratio();
  rep.best_ratio = best.ratio();
  rep.snr_y = worst.snr_y;
  return rep;
}

struct CorollaryReport {
  double snr_y = 0.0;
  std::vector<double> snr_sequence;  // SNR of y_next at each substitution
  bool monotone = false;
};

inline void check_decreasing(std::span<const double> deltas) {
  if (deltas.empty()) throw std::invalid_argument("deltas must be non-empty");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    check_delta(deltas[i]);
    if (i > 0 && !(deltas[i] < deltas[i - 1])) {
      throw std::invalid_argument("deltas must be strictly decreasing");
    }
  }
}

/// Aligned mode: e_k = delta_k n, so SNR(y_next_k) = 2/(1+delta_k) SNR(y).
inline CorollaryReport run_corollary(std::span<const double> deltas, std::size_t dim,
                                     std::uint64_t seed) {
  check_decreasing(deltas);
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  Prng rng(seed);
  const auto x = detail::gaussian_vector(dim, rng);
  const auto n = detail::gaussian_vector(dim, rng);
  CorollaryReport rep;
  for (double d : deltas) {
    std::vector<double> e(n);
    for (double& a : e) a *= d;
    const TheoremTrial t = evaluate_trial(x, n, std::move(e));
    rep.snr_y = t.snr_y;
    rep.snr_sequence.push_back(t.snr_y_next);
  }
  rep.monotone = rep.snr_sequence.front() > rep.snr_y;
  for (std::size_t i = 1; i < rep.snr_sequence.size(); ++i) {
    rep.monotone = rep.monotone && rep.snr_sequence[i] > rep.snr_sequence[i - 1];
  }
  return rep;
}

struct RandomizedCorollaryReport {
  std::size_t trials = 0;
  std::size_t monotone_trials = 0;
  double monotone_rate() const {
    return trials ? static_cast<double>(monotone_trials) / static_cast<double>(trials) : 0.0;
  }
};

/// Randomized mode: each e_k gets an independent isotropic direction. Only
/// the norms follow delta_k, so monotonicity is an empirical rate here.
inline RandomizedCorollaryReport run_corollary_randomized(std::span<const double> deltas,
                                                          std::size_t dim,
                                                          std::size_t trials,
                                                          std::uint64_t seed) {
  check_decreasing(deltas);
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  RandomizedCorollaryReport rep;
  rep.trials = trials;
  for (std::size_t k = 0; k < trials; ++k) {
    Prng rng(derive_seed(seed, k));
    const auto x = detail::gaussian_vector(dim, rng);
    const auto n = detail::gaussian_vector(dim, rng);
    double prev = snr(x, n);
    bool ok = true;
    for (double d : deltas) {
      auto e = detail::gaussian_vector(dim, rng);
      detail::rescale_to(e, d * norm(n));
      const double s = evaluate_trial(x, n, std::move(e)).snr_y_next;
      ok = ok && s > prev;
      prev = s;
    }
    if (ok) ++rep.monotone_trials;
  }
  return rep;
}

}  // namespace itsinr::snrlab
