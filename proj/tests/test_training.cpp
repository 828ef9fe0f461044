#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "itsinr/training.hpp"

using namespace itsinr;

namespace {

ModelConfig tiny_siren(std::uint64_t seed = 0) {
  ModelConfig cfg = ModelConfig::defaults(ModelKind::siren);
  cfg.depth = 2;
  cfg.width = 16;
  cfg.seed = seed;
  return cfg;
}

double l2_dist(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

bool same_record(const MetricsRecord& a, const MetricsRecord& b) {
  return a.iteration == b.iteration && a.loss == b.loss && a.psnr_clean == b.psnr_clean &&
         a.ssim_clean == b.ssim_clean && a.psnr_noisy == b.psnr_noisy &&
         a.sigma_hat == b.sigma_hat;
}

}  // namespace

TEST(MseLoss, Cases) {
  Tape tape;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor a = Tensor::zeros(Shape{5, 2}), b = Tensor::zeros(Shape{5, 2});
  for (double& v : a.values) v = u(rng);
  for (double& v : b.values) v = u(rng);
  EXPECT_EQ(mse_loss(tape.constant(a), tape.constant(a)).value().values[0], 0.0);

  Tensor shifted = a;
  for (double& v : shifted.values) v += 0.5;
  EXPECT_NEAR(mse_loss(tape.constant(shifted), tape.constant(a)).value().values[0], 0.25, 1e-15);

  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  EXPECT_NEAR(mse_loss(tape.constant(a), tape.constant(b)).value().values[0], s / 10.0, 1e-12);

  EXPECT_THROW(mse_loss(tape.constant(a), tape.constant(Tensor::zeros(Shape{10}))),
               std::invalid_argument);
}

TEST(TvRegularizer, ConstantIsZero) {
  Tape tape;
  Var p = tape.constant(Tensor::filled(Shape{12, 3}, 0.4));
  EXPECT_EQ(tv_regularizer(p, 3, 4).value().values[0], 0.0);
}

TEST(TvRegularizer, HandCount) {
  Tape tape;
  Var p = tape.constant(tensor_of(Shape{4, 1}, {0, 1, 0, 1}));  // [[0,1],[0,1]]
  EXPECT_NEAR(tv_regularizer(p, 2, 2).value().values[0], 0.5, 1e-15);
}

TEST(TvRegularizer, MatchesDoubleLoopOracle) {
  const std::size_t h = 5, w = 6, ch = 3;
  Tensor t = Tensor::zeros(Shape{h * w, ch});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t k = 0; k < ch; ++k) {
        t.at(r * w + c, k) = ((r + c) % 2 ? 0.9 : 0.1) + 0.05 * u(rng);
      }
    }
  }
  auto px = [&](std::size_t r, std::size_t c, std::size_t k) { return t.at(r * w + c, k); };
  double oracle = 0.0;
  for (std::size_t k = 0; k < ch; ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c) s += std::fabs(px(r + 1, c, k) - px(r, c, k));
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c) s += std::fabs(px(r, c + 1, k) - px(r, c, k));
    oracle += s / static_cast<double>(h * w);
  }
  oracle /= static_cast<double>(ch);
  Tape tape;
  EXPECT_NEAR(tv_regularizer(tape.constant(t), h, w).value().values[0], oracle, 1e-12);
}

TEST(TvRegularizer, GradientMatchesSignOracle) {
  const std::size_t h = 3, w = 4, ch = 2;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor t = Tensor::zeros(Shape{h * w, ch});
  for (double& v : t.values) v = u(rng);
  Tape tape;
  const Var x = tape.leaf(t);
  tape.backward(tv_regularizer(x, h, w));
  const auto grad = tape.grad(x);

  // d/dx_p sum |x_p - x_q| over the 4-neighbourhood, normalized by H*W*C
  const double denom = static_cast<double>(h * w * ch);
  auto px = [&](long r, long c, std::size_t k) { return t.values[(r * w + c) * ch + k]; };
  for (long r = 0; r < static_cast<long>(h); ++r) {
    for (long c = 0; c < static_cast<long>(w); ++c) {
      for (std::size_t k = 0; k < ch; ++k) {
        double expect = 0.0;
        const long nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& q : nb) {
          if (q[0] < 0 || q[1] < 0 || q[0] >= static_cast<long>(h) || q[1] >= static_cast<long>(w)) {
            continue;
          }
          const double d = px(r, c, k) - px(q[0], q[1], k);
          expect += (d > 0) - (d < 0);
        }
        EXPECT_DOUBLE_EQ(grad[(r * w + c) * ch + k], expect / denom);
      }
    }
  }

  // Central differences agree up to the rounding floor of an O(1) loss.
  auto evaluate = [&](const Tensor& v) {
    Tape tp;
    return tv_regularizer(tp.constant(v), h, w).value().values[0];
  };
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    Tensor up = t, down = t;
    up.values[i] += 1e-5;
    down.values[i] -= 1e-5;
    EXPECT_NEAR((evaluate(up) - evaluate(down)) / 2e-5, grad[i], 1e-9);
  }
}

TEST(TvRegularizer, SubgradientAtZeroIsZero) {
  Tape tape;
  Var p = tape.leaf(Tensor::filled(Shape{4, 1}, 0.3));
  tape.backward(tv_regularizer(p, 2, 2));
  for (double g : tape.grad(p)) EXPECT_EQ(g, 0.0);
}

TEST(TvRegularizer, NeedsTwoByTwo) {
  Tape tape;
  EXPECT_THROW(tv_regularizer(tape.constant(Tensor::zeros(Shape{3, 1})), 1, 3),
               std::invalid_argument);
}

TEST(Adam, FirstStepIsMinusLr) {
  Tensor theta = tensor_of(Shape{1}, {0.0});
  std::vector<Tensor*> params{&theta};
  const std::vector<double> g{1.0};
  std::vector<std::span<const double>> grads{g};
  AdamState st;
  adam_step(params, grads, st, 0.01);
  EXPECT_NEAR(theta.values[0], -0.01, 1e-9);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor theta = tensor_of(Shape{3}, {0.5, -1, 2});
  std::vector<Tensor*> params{&theta};
  const std::vector<double> g(3, 0.0);
  std::vector<std::span<const double>> grads{g};
  AdamState st;
  adam_step(params, grads, st, 0.1);
  EXPECT_EQ(theta.values, (std::vector<double>{0.5, -1, 2}));
  for (double v : st.v[0]) EXPECT_GE(v, 0.0);
}

TEST(Adam, QuadraticMatchesHandSimulation) {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor theta = tensor_of(Shape{1}, {1.0});
  std::vector<Tensor*> params{&theta};
  AdamState st;
  double ref = 1.0, m = 0.0, v = 0.0, prev = 1.0;
  for (int t = 1; t <= 5; ++t) {
    const std::vector<double> g{2.0 * theta.values[0]};
    std::vector<std::span<const double>> grads{g};
    adam_step(params, grads, st, lr);
    const double gr = 2.0 * ref;
    m = b1 * m + (1 - b1) * gr;
    v = b2 * v + (1 - b2) * gr * gr;
    ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(theta.values[0], ref, 1e-14);
    EXPECT_LT(std::fabs(theta.values[0]), std::fabs(prev));
    prev = theta.values[0];
  }
}

TEST(Adam, RejectsBadInput) {
  Tensor theta = tensor_of(Shape{2}, {0, 0});
  std::vector<Tensor*> params{&theta};
  const std::vector<double> g{1.0};
  std::vector<std::span<const double>> grads{g};
  AdamState st;
  EXPECT_THROW(adam_step(params, grads, st, 0.0), std::invalid_argument);
  EXPECT_THROW(adam_step(params, grads, st, 0.1), std::invalid_argument);
}

TEST(ItsSubstitute, ArithmeticMean) {
  SupervisionState st(Image::from_values(1, 2, 1, {0.2, 0.8}));
  st = its_substitute(st, Image::from_values(1, 2, 1, {0.4, 0.6}));
  EXPECT_NEAR(st.y_current.pixels()[0], 0.3, 1e-15);
  EXPECT_NEAR(st.y_current.pixels()[1], 0.7, 1e-15);
  EXPECT_EQ(st.k, 1);
}

TEST(ItsSubstitute, WorstAndBestCase) {
  const Image clean = synth_phantom(16, 16, PhantomKind::composite);
  const NoisySample s = add_gaussian_noise(clean, 10, 3);
  SupervisionState st(s.noisy);
  EXPECT_EQ(its_substitute(st, s.noisy).y_current, s.noisy);

  const SupervisionState best = its_substitute(st, clean);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double half = 0.5 * (s.noisy.pixels()[i] - clean.pixels()[i]);
    EXPECT_NEAR(best.y_current.pixels()[i] - clean.pixels()[i], half, 1e-15);
  }
}

TEST(ItsSubstitute, AlwaysBlendsWithOriginal) {
  SupervisionState st(Image::from_values(1, 2, 1, {0.0, 1.0}));
  st = its_substitute(st, Image::filled(1, 2, 1, 0.5));
  st = its_substitute(st, Image::filled(1, 2, 1, 1.0));
  EXPECT_EQ(st.y_current.pixels(), (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(st.k, 2);
  EXPECT_EQ(st.y_orig.pixels(), (std::vector<double>{0.0, 1.0}));
}

TEST(ItsSubstitute, DimensionMismatch) {
  SupervisionState st(Image::filled(2, 2, 1, 0.5));
  EXPECT_THROW(its_substitute(st, Image::filled(2, 3, 1, 0.5)), std::invalid_argument);
}

TEST(Train, SingleIteration) {
  const Image clean = synth_phantom(16, 16, PhantomKind::disk);
  TrainConfig tc;
  tc.iterations = 1;
  const auto r = train(tiny_siren(), tc, clean, clean);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].iteration, 1);
  EXPECT_FALSE(r.diverged);
  EXPECT_TRUE(r.final_image.same_dims(clean));
}

TEST(Train, LogCadence) {
  const Image clean = synth_phantom(16, 16, PhantomKind::gradient);
  TrainConfig tc;
  tc.iterations = 40;
  tc.log_every = 10;
  const auto r = train(tiny_siren(), tc, clean);
  ASSERT_EQ(r.records.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.records[i].iteration, static_cast<int>(10 * (i + 1)));
    EXPECT_FALSE(r.records[i].psnr_clean.has_value());
    EXPECT_FALSE(r.records[i].sigma_hat.has_value());
  }
}

TEST(Train, ItsCannotActBeforeN) {
  const Image clean = synth_phantom(24, 24, PhantomKind::composite);
  const NoisySample s = add_gaussian_noise(clean, 25, 1);
  TrainConfig a;
  a.iterations = 260;
  a.log_every = 20;
  a.its_period = 0;
  TrainConfig b = a;
  b.its_period = 200;
  const auto ra = train(tiny_siren(1), a, s.noisy, clean);
  const auto rb = train(tiny_siren(1), b, s.noisy, clean);
  ASSERT_EQ(ra.records.size(), rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    if (ra.records[i].iteration <= 200) {
      EXPECT_TRUE(same_record(ra.records[i], rb.records[i])) << ra.records[i].iteration;
    }
  }
  EXPECT_NE(ra.records.back().loss, rb.records.back().loss);
  EXPECT_EQ(ra.supervision.k, 0);
  EXPECT_EQ(rb.supervision.k, 1);
}

TEST(Train, SupervisionFollowsLoggedPredictions) {
  const Image clean = synth_phantom(16, 16, PhantomKind::disk);
  const NoisySample s = add_gaussian_noise(clean, 25, 2);
  TrainConfig tc;
  tc.iterations = 90;
  tc.its_period = 30;
  std::vector<Image> at_sub;
  std::vector<Image> supervision;
  int substitutions_seen = 0;
  auto obs = [&](int it, const Tensor& out, const SupervisionState& st) {
    if (it % 30 == 0) {
      at_sub.push_back(output_to_image(out, 16, 16));
      supervision.push_back(st.y_current);
      substitutions_seen = st.k;
    } else if (st.k == 0) {
      EXPECT_EQ(st.y_current, st.y_orig);
    }
  };
  const auto r = train(tiny_siren(2), tc, s.noisy, clean, obs);
  ASSERT_EQ(at_sub.size(), 3u);
  EXPECT_EQ(substitutions_seen, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const SupervisionState expect = its_substitute(SupervisionState(s.noisy), at_sub[k]);
    EXPECT_EQ(supervision[k], expect.y_current);
  }
  EXPECT_EQ(r.supervision.y_current, supervision.back());
}

TEST(Train, VanillaKeepsOriginalSupervision) {
  const Image clean = synth_phantom(16, 16, PhantomKind::stripes);
  const NoisySample s = add_gaussian_noise(clean, 25, 3);
  TrainConfig tc;
  tc.iterations = 50;
  tc.its_period = 0;
  auto obs = [&](int, const Tensor&, const SupervisionState& st) {
    EXPECT_EQ(st.y_current, s.noisy);
    EXPECT_EQ(st.k, 0);
  };
  train(tiny_siren(), tc, s.noisy, clean, obs);
}

TEST(Train, TheoremOnActualRun) {
  // Whenever the prediction beats the observation, the renewed supervision
  // is closer to the clean image than the observation is.
  const Image clean = synth_phantom(24, 24, PhantomKind::composite);
  const NoisySample s = add_gaussian_noise(clean, 50, 4);
  TrainConfig tc;
  tc.iterations = 300;
  tc.its_period = 50;
  const double noise_norm = l2_dist(s.noisy, clean);
  int checked = 0;
  auto obs = [&](int it, const Tensor& out, const SupervisionState& st) {
    if (it % 50 != 0) return;
    const Image pred = output_to_image(out, 24, 24);
    if (l2_dist(pred, clean) < noise_norm) {
      EXPECT_LT(l2_dist(st.y_current, clean), noise_norm) << it;
      ++checked;
    }
  };
  train(tiny_siren(4), tc, s.noisy, clean, obs);
  EXPECT_GT(checked, 0);
}

TEST(Train, ZeroLambdaTvMatchesNone) {
  const Image clean = synth_phantom(16, 16, PhantomKind::composite);
  const NoisySample s = add_gaussian_noise(clean, 25, 5);
  TrainConfig a;
  a.iterations = 60;
  a.log_every = 10;
  TrainConfig b = a;
  b.reg = RegKind::tv;
  b.lambda = 0.0;
  TrainConfig c = a;
  c.lambda = 0.5;  // ignored with reg = none
  const auto ra = train(tiny_siren(), a, s.noisy, clean);
  const auto rb = train(tiny_siren(), b, s.noisy, clean);
  const auto rc = train(tiny_siren(), c, s.noisy, clean);
  ASSERT_EQ(ra.records.size(), rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    EXPECT_TRUE(same_record(ra.records[i], rb.records[i]));
    EXPECT_TRUE(same_record(ra.records[i], rc.records[i]));
  }
  EXPECT_EQ(ra.final_image, rb.final_image);
}

TEST(Train, TvSmoothsPrediction) {
  const Image clean = synth_phantom(16, 16, PhantomKind::composite);
  const NoisySample s = add_gaussian_noise(clean, 50, 6);
  TrainConfig a;
  a.iterations = 150;
  a.its_period = 0;
  TrainConfig b = a;
  b.reg = RegKind::tv;
  b.lambda = 0.05;
  auto tv_of = [](const Image& img) {
    Tape tape;
    return tv_regularizer(tape.constant(image_as_matrix(img)), img.height(), img.width())
        .value()
        .values[0];
  };
  const auto ra = train(tiny_siren(), a, s.noisy);
  const auto rb = train(tiny_siren(), b, s.noisy);
  EXPECT_LT(tv_of(rb.final_image), tv_of(ra.final_image));
}

TEST(Train, Deterministic) {
  const Image clean = synth_phantom(16, 16, PhantomKind::disk);
  const NoisySample s = add_gaussian_noise(clean, 25, 7);
  TrainConfig tc;
  tc.iterations = 60;
  tc.its_period = 20;
  for (ModelKind k : {ModelKind::siren, ModelKind::wire, ModelKind::ffn}) {
    ModelConfig m = ModelConfig::defaults(k);
    m.depth = 2;
    m.width = 12;
    m.ff_count = 8;
    TrainConfig t = tc;
    t.lr = TrainConfig::defaults(k).lr;
    const auto r1 = train(m, t, s.noisy, clean);
    const auto r2 = train(m, t, s.noisy, clean);
    ASSERT_EQ(r1.records.size(), r2.records.size());
    for (std::size_t i = 0; i < r1.records.size(); ++i) {
      EXPECT_TRUE(same_record(r1.records[i], r2.records[i])) << model_name(k);
    }
    EXPECT_EQ(r1.final_image, r2.final_image);
    EXPECT_LT(r1.records.back().loss, r1.records.front().loss) << model_name(k);
  }
}

TEST(Train, DivergenceProducesDiagnostic) {
  const Image clean = synth_phantom(16, 16, PhantomKind::disk);
  ModelConfig m = ModelConfig::defaults(ModelKind::wire);
  m.depth = 1;
  m.width = 4;
  m.wire_s = 1e300;  // (s v)^2 overflows
  TrainConfig tc;
  tc.iterations = 5;
  const auto r = train(m, tc, clean, clean);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.diagnostic.empty());
  ASSERT_FALSE(r.records.empty());
  EXPECT_EQ(r.records.back().iteration, 1);
}

TEST(Train, RejectsMismatchedInputs) {
  const Image gray = synth_phantom(16, 16, PhantomKind::disk);
  const Image color = synth_phantom(16, 16, PhantomKind::disk, 3);
  TrainConfig tc;
  tc.iterations = 1;
  EXPECT_THROW(train(tiny_siren(), tc, color), std::invalid_argument);
  EXPECT_THROW(train(tiny_siren(), tc, gray, synth_phantom(16, 20, PhantomKind::disk)),
               std::invalid_argument);
  tc.iterations = 0;
  EXPECT_THROW(train(tiny_siren(), tc, gray), std::invalid_argument);
}

TEST(Train, ColorImage) {
  const Image clean = synth_phantom(16, 16, PhantomKind::composite, 3);
  ModelConfig m = tiny_siren();
  m.out_channels = 3;
  TrainConfig tc;
  tc.iterations = 20;
  tc.log_every = 10;
  const auto r = train(m, tc, clean, clean);
  EXPECT_EQ(r.final_image.channels(), 3u);
  EXPECT_TRUE(r.records.back().ssim_clean.has_value());
}

TEST(Train, CleanTargetIsFitAbove30dB) {
  const Image clean = synth_phantom(96, 96, PhantomKind::composite);
  const NoisySample s = add_gaussian_noise(clean, 0, 0);
  ASSERT_EQ(s.noisy, clean);
  TrainConfig tc;
  tc.its_period = 0;
  tc.log_every = 500;
  const auto r = train(ModelConfig::defaults(ModelKind::siren), tc, s.noisy, clean);
  ASSERT_FALSE(r.diverged);
  EXPECT_GE(*r.records.back().psnr_clean, 30.0);
  EXPECT_EQ(r.records.back().iteration, 2000);
}
