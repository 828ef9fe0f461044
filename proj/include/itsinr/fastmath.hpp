#pragma once

// Branch-free sine/cosine over contiguous arrays. The loop bodies are written
// so that GCC/Clang vectorize them under `#pragma omp simd`; SIREN training
// spends most of its non-GEMM time here.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

namespace itsinr::fastmath {

namespace detail {

// Cody-Waite split of pi/2 (fdlibm constants). The leading part has 33
// significant bits so k * kPio2Hi is exact for |k| < 2^20.
inline constexpr double kTwoOverPi = 6.36619772367581382433e-01;
inline constexpr double kPio2Hi = 1.57079632673412561417e+00;
inline constexpr double kPio2Mid = 6.07710050630396597660e-11;
inline constexpr double kPio2Lo = 2.02226624871116645580e-21;

// Above this magnitude the three-term reduction loses accuracy; such inputs
// are patched with the libm result after the vector pass.
inline constexpr double kReductionLimit = 1.0e5;

// 1.5 * 2^52: adding and subtracting rounds to the nearest integer under the
// default rounding mode, and unlike nearbyint it vectorizes.
inline constexpr double kRoundMagic = 6755399441055744.0;

// Cephes minimax coefficients on [-pi/4, pi/4].
inline constexpr double kSin0 = 1.58962301576546568060e-10;
inline constexpr double kSin1 = -2.50507477628578072866e-08;
inline constexpr double kSin2 = 2.75573136213857245213e-06;
inline constexpr double kSin3 = -1.98412698295895385996e-04;
inline constexpr double kSin4 = 8.33333333332211858878e-03;
inline constexpr double kSin5 = -1.66666666666666307295e-01;

inline constexpr double kCos0 = -1.13585365213876817300e-11;
inline constexpr double kCos1 = 2.08757008419747316778e-09;
inline constexpr double kCos2 = -2.75573141792967388112e-07;
inline constexpr double kCos3 = 2.48015872888517045348e-05;
inline constexpr double kCos4 = -1.38888888888730564116e-03;
inline constexpr double kCos5 = 4.16666666666665929218e-02;

inline void sincos_one(double x, double& s_out, double& c_out) {
  const double k = (x * kTwoOverPi + kRoundMagic) - kRoundMagic;
  const double r = ((x - k * kPio2Hi) - k * kPio2Mid) - k * kPio2Lo;
  const double z = r * r;

  double ps = kSin0;
  ps = ps * z + kSin1;
  ps = ps * z + kSin2;
  ps = ps * z + kSin3;
  ps = ps * z + kSin4;
  ps = ps * z + kSin5;
  const double s = r + r * z * ps;

  double pc = kCos0;
  pc = pc * z + kCos1;
  pc = pc * z + kCos2;
  pc = pc * z + kCos3;
  pc = pc * z + kCos4;
  pc = pc * z + kCos5;
  const double c = 1.0 - 0.5 * z + z * z * pc;

  const auto q = static_cast<std::int64_t>(k) & 3;
  const double s_sel = (q & 1) ? c : s;
  const double c_sel = (q & 1) ? s : c;
  s_out = (q & 2) ? -s_sel : s_sel;
  c_out = ((q + 1) & 2) ? -c_sel : c_sel;
}

}  // namespace detail

/// Writes sin(x[i]) to `sin_out[i]` and cos(x[i]) to `cos_out[i]`. Absolute
/// error is below 4e-16 for |x| < 1e5; larger inputs fall back to libm.
inline void sincos(std::span<const double> x, std::span<double> sin_out,
                   std::span<double> cos_out) {
  const std::size_t n = x.size();
  const double* in = x.data();
  double* so = sin_out.data();
  double* co = cos_out.data();
  int any_large = 0;
#pragma omp simd reduction(| : any_large)
  for (std::size_t i = 0; i < n; ++i) {
    double s, c;
    detail::sincos_one(in[i], s, c);
    so[i] = s;
    co[i] = c;
    any_large |= std::fabs(in[i]) < detail::kReductionLimit ? 0 : 1;
  }
  if (any_large != 0) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!(std::fabs(in[i]) < detail::kReductionLimit)) {
        so[i] = std::sin(in[i]);
        co[i] = std::cos(in[i]);
      }
    }
  }
}

}  // namespace itsinr::fastmath
