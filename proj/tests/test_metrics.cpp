#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "itsinr/metrics.hpp"

using namespace itsinr;

namespace {

Image noisy_image(std::size_t h, std::size_t w, std::size_t c, double sigma, std::uint64_t seed) {
  Prng rng(seed);
  std::vector<double> px(h * w * c);
  for (double& v : px) v = 0.5 + sigma * rng.normal();
  return Image::clamped(h, w, c, std::move(px));
}

// Two-sided Student-t tail probability by composite Simpson integration of
// the density over [0, |t|].
double t_two_sided_oracle(double t, double dof) {
  const double norm = std::exp(std::lgamma(0.5 * (dof + 1)) - std::lgamma(0.5 * dof)) /
                      std::sqrt(dof * std::numbers::pi);
  auto pdf = [&](double x) { return norm * std::pow(1.0 + x * x / dof, -0.5 * (dof + 1)); };
  const int n = 200000;
  const double hi = std::fabs(t), step = hi / n;
  double s = pdf(0.0) + pdf(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(i * step);
  const double central = s * step / 3.0;  // P(0 <= T <= |t|)
  return 1.0 - 2.0 * central;
}

}  // namespace

TEST(Psnr, Identical) {
  const Image a = noisy_image(8, 8, 1, 0.1, 1);
  EXPECT_EQ(psnr(a, a), kInfinity);
}

TEST(Psnr, UniformHalfGap) {
  const Image a = Image::filled(4, 5, 3, 0.25), b = Image::filled(4, 5, 3, 0.75);
  EXPECT_NEAR(psnr(a, b), 6.0206, 1e-3);
  EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(4.0), 1e-12);
}

TEST(Psnr, SymmetricAndMonotone) {
  const Image a = noisy_image(8, 8, 1, 0.1, 2), b = noisy_image(8, 8, 1, 0.1, 3);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  double prev = kInfinity;
  for (double gap = 0.05; gap <= 0.5; gap += 0.05) {
    const double p = psnr(Image::filled(3, 3, 1, 0.25), Image::filled(3, 3, 1, 0.25 + gap));
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Psnr, DimensionMismatch) {
  EXPECT_THROW(psnr(Image::filled(2, 2, 1, 0), Image::filled(2, 3, 1, 0)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
  for (std::size_t c : {1u, 3u}) {
    const Image a = noisy_image(20, 17, c, 0.2, 4);
    EXPECT_EQ(ssim(a, a), 1.0);
  }
}

TEST(Ssim, ConstantImages) {
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(Image::filled(12, 12, 1, 0.0), Image::filled(12, 12, 1, 1.0)),
              c1 / (1.0 + c1), 1e-12);
}

TEST(Ssim, Symmetric) {
  const Image a = noisy_image(16, 16, 3, 0.1, 5), b = noisy_image(16, 16, 3, 0.1, 6);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
  EXPECT_LE(ssim(a, b), 1.0);
}

TEST(Ssim, MatchesDirectWindowOracle) {
  const Image a = noisy_image(13, 12, 1, 0.15, 7), b = noisy_image(13, 12, 1, 0.15, 8);
  std::vector<double> g(11);
  double gs = 0.0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
  double acc = 0.0;
  int count = 0;
  for (std::size_t r = 0; r + 11 <= 13; ++r) {
    for (std::size_t c = 0; c + 11 <= 12; ++c) {
      double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double wgt = g[i] * g[j] / (gs * gs);
          const double x = a.at(r + i, c + j), y = b.at(r + i, c + j);
          ma += wgt * x;
          mb += wgt * y;
          aa += wgt * x * x;
          bb += wgt * y * y;
          ab += wgt * x * y;
        }
      }
      const double va = aa - ma * ma, vb = bb - mb * mb, cv = ab - ma * mb;
      acc += (2 * ma * mb + 1e-4) * (2 * cv + 9e-4) / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
      ++count;
    }
  }
  EXPECT_NEAR(ssim(a, b), acc / count, 1e-12);
}

TEST(Ssim, TooSmall) {
  EXPECT_THROW(ssim(Image::filled(10, 20, 1, 0), Image::filled(10, 20, 1, 0)),
               std::invalid_argument);
}

TEST(Snr, ClosedForms) {
  const std::vector<double> ones(4, 1.0), half(4, 0.5), zero(4, 0.0);
  EXPECT_EQ(snr(ones, half), 2.0);
  EXPECT_EQ(snr(ones, zero), kInfinity);
  EXPECT_THROW(snr(zero, ones), std::invalid_argument);
  EXPECT_THROW(snr(ones, std::vector<double>(3, 1.0)), std::invalid_argument);
}

TEST(Snr, BestCaseSubstitutionDoubles) {
  Prng rng(9);
  std::vector<double> x(50), n(50), half(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = rng.normal();
    n[i] = rng.normal();
    half[i] = 0.5 * n[i];
  }
  EXPECT_NEAR(snr(x, half) / snr(x, n), 2.0, 1e-12);
}

TEST(Snr, ScaleCovariance) {
  Prng rng(10);
  std::vector<double> s(20), e(20), s2(20), e2(20);
  for (std::size_t i = 0; i < 20; ++i) {
    s[i] = rng.normal();
    e[i] = rng.normal();
    s2[i] = 3.7 * s[i];
    e2[i] = 3.7 * e[i];
  }
  EXPECT_NEAR(snr(s2, e2), snr(s, e), 1e-12);
}

TEST(ErrorMap, Cases) {
  const Image clean = noisy_image(6, 6, 3, 0.05, 11);
  for (double v : error_map(clean, clean).values) EXPECT_EQ(v, 0.0);

  std::vector<double> shifted = clean.pixels();
  for (double& v : shifted) v += 0.1;
  const Field e = error_map(Image::from_values(6, 6, 3, shifted), clean);
  for (double v : e.values) EXPECT_NEAR(v, 0.1, 1e-15);

  const Image x_hat = noisy_image(6, 6, 3, 0.05, 12);
  const Field err = error_map(x_hat, clean);
  double xs = 0, es = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    xs += clean.pixels()[i] * clean.pixels()[i];
    es += (x_hat.pixels()[i] - clean.pixels()[i]) * (x_hat.pixels()[i] - clean.pixels()[i]);
  }
  EXPECT_NEAR(snr(clean.pixels(), err.values), std::sqrt(xs) / std::sqrt(es), 1e-12);
}

TEST(MadSigma, ConstantIsZero) {
  EXPECT_EQ(mad_sigma(Field(8, 9, 1, 0.37)), 0.0);
}

TEST(MadSigma, GaussianFieldNearSampleStd) {
  Field f(256, 256, 1);
  Prng rng(12);
  const double sigma = 25.0 / 255.0;
  double ss = 0.0;
  for (double& v : f.values) {
    v = sigma * rng.normal();
    ss += v * v;
  }
  const double sample_std = 255.0 * std::sqrt(ss / static_cast<double>(f.size()));
  const double est = mad_sigma(f);
  EXPECT_NEAR(est, sample_std, 0.05 * sample_std);
  EXPECT_NEAR(est, 25.0, 0.05 * 25.0);
}

TEST(MadSigma, DcShiftInvariant) {
  Field f(32, 30, 3);
  Prng rng(13);
  for (double& v : f.values) v = 0.1 * rng.normal();
  Field g = f;
  for (double& v : g.values) v += 0.42;
  EXPECT_NEAR(mad_sigma(f), mad_sigma(g), 1e-9);
}

TEST(MadSigma, ColorIsChannelMean) {
  Field f(16, 16, 3);
  Prng rng(14);
  for (std::size_t i = 0; i < 256; ++i) {
    for (std::size_t c = 0; c < 3; ++c) f.values[i * 3 + c] = (c + 1) * 0.01 * rng.normal();
  }
  double mean = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    Field one(16, 16, 1);
    for (std::size_t i = 0; i < 256; ++i) one.values[i] = f.values[i * 3 + c];
    mean += mad_sigma(one) / 3.0;
  }
  EXPECT_NEAR(mad_sigma(f), mean, 1e-12);
}

TEST(MadSigma, OddTrailingRowDropped) {
  Field f(5, 4, 1);
  Prng rng(15);
  for (double& v : f.values) v = rng.normal();
  Field g(4, 4, 1);
  std::copy_n(f.values.begin(), 16, g.values.begin());
  EXPECT_EQ(mad_sigma(f), mad_sigma(g));
  EXPECT_THROW(mad_sigma(Field(1, 4, 1)), std::invalid_argument);
}

TEST(PairedTTest, EqualInputs) {
  const std::vector<double> a{1, 2, 3};
  const auto r = paired_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(PairedTTest, ConstantDifference) {
  const std::vector<double> a{2, 3, 4}, b{1, 2, 3};
  const auto r = paired_t_test(a, b);
  EXPECT_EQ(r.t, kInfinity);
  EXPECT_EQ(r.p, 0.0);
  EXPECT_EQ(paired_t_test(b, a).t, -kInfinity);
}

TEST(PairedTTest, TextbookCase) {
  const std::vector<double> a{1, 2, 3, 4}, b{0, 0, 1, 2};
  const auto r = paired_t_test(a, b);
  // d = [1, 2, 2, 2]: mean 1.75, sd 0.5
  EXPECT_NEAR(r.t, 1.75 / (0.5 / 2.0), 1e-12);
  EXPECT_NEAR(r.p, t_two_sided_oracle(7.0, 3.0), 1e-6);
  EXPECT_EQ(r.n, 4u);
  EXPECT_DOUBLE_EQ(r.mean_diff, 1.75);
}

TEST(PairedTTest, AgreesWithDensityOracleAcrossDof) {
  Prng rng(16);
  for (std::size_t n : {2u, 3u, 5u, 8u, 20u}) {
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal(0.3, 1.0);
      b[i] = rng.normal();
    }
    const auto r = paired_t_test(a, b);
    EXPECT_NEAR(r.p, t_two_sided_oracle(r.t, static_cast<double>(n - 1)), 1e-6) << n;
  }
}

TEST(PairedTTest, SwapNegatesTKeepsP) {
  const std::vector<double> a{0.3, 1.2, -0.4, 2.2, 0.9}, b{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto ab = paired_t_test(a, b), ba = paired_t_test(b, a);
  EXPECT_NEAR(ab.t, -ba.t, 1e-15);
  EXPECT_NEAR(ab.p, ba.p, 1e-15);
}

TEST(PairedTTest, Errors) {
  const std::vector<double> one{1.0}, two{1.0, 2.0};
  EXPECT_THROW(paired_t_test(one, one), std::invalid_argument);
  EXPECT_THROW(paired_t_test(two, one), std::invalid_argument);
}
