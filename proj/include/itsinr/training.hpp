#pragma once

// Full-batch INR fitting with Adam, optional anisotropic TV, and iterative
// substitution (ITS) of the supervision signal.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "itsinr/autodiff.hpp"
#include "itsinr/image.hpp"
#include "itsinr/metrics.hpp"
#include "itsinr/models.hpp"

namespace itsinr {

enum class RegKind { none, tv };

inline RegKind parse_reg_kind(const std::string& s) {
  if (s == "none") return RegKind::none;
  if (s == "tv") return RegKind::tv;
  throw std::invalid_argument("unknown regularizer: " + s);
}

inline const char* reg_name(RegKind k) { return k == RegKind::tv ? "tv" : "none"; }

struct TrainConfig {
  int iterations = 2000;
  double lr = 1e-3;
  double lambda = 0.0;
  RegKind reg = RegKind::none;
  int its_period = 200;  // 0 disables ITS
  int log_every = 50;
  // Full-batch training draws no random numbers; the seed is carried so a
  // run is fully described by its config.
  std::uint64_t seed = 0;

  static TrainConfig defaults(ModelKind kind) {
    TrainConfig cfg;
    if (kind == ModelKind::wire) cfg.lr = 5e-3;
    return cfg;
  }

  double effective_lambda() const { return reg == RegKind::none ? 0.0 : lambda; }

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (its_period < 0) throw std::invalid_argument("ITS period must be >= 0");
    if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Losses

inline Var mse_loss(Var pred, Var target) {
  if (!(pred.shape() == target.shape())) {
    throw std::invalid_argument("mse_loss shape mismatch: " + pred.shape().str() +
                                " vs " + target.shape().str());
  }
  return mean_all(square(sub(pred, target)));
}

/// Row index pairs for vertical and horizontal neighbor differences on an
/// H x W grid stored as (H*W) x C.
struct TvStencil {
  std::size_t height = 0, width = 0;
  std::vector<std::size_t> down, up;     // (r+1, c) and (r, c)
  std::vector<std::size_t> right, left;  // (r, c+1) and (r, c)

  TvStencil(std::size_t h, std::size_t w) : height(h), width(w) {
    if (h < 2 || w < 2) throw std::invalid_argument("tv_regularizer needs H, W >= 2");
    for (std::size_t r = 0; r + 1 < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        down.push_back((r + 1) * w + c);
        up.push_back(r * w + c);
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c + 1 < w; ++c) {
        right.push_back(r * w + c + 1);
        left.push_back(r * w + c);
      }
    }
  }
};

/// sum |vertical diffs| + sum |horizontal diffs|, divided by H*W*C (i.e. the
/// per-pixel total averaged over channels).
inline Var tv_regularizer(Var pred, const TvStencil& st) {
  const Shape& s = pred.shape();
  if (s.rank() != 2 || s[0] != st.height * st.width) {
    throw std::invalid_argument("tv_regularizer: prediction does not match stencil");
  }
  const double denom = static_cast<double>(s[0] * s[1]);
  Var dv = abs(sub(gather_rows(pred, st.down), gather_rows(pred, st.up)));
  Var dh = abs(sub(gather_rows(pred, st.right), gather_rows(pred, st.left)));
  // mean_all * (count / denom) turns each mean back into a normalized sum.
  return add(scale(mean_all(dv), static_cast<double>(dv.value().numel()) / denom),
             scale(mean_all(dh), static_cast<double>(dh.value().numel()) / denom));
}

inline Var tv_regularizer(Var pred, std::size_t h, std::size_t w) {
  return tv_regularizer(pred, TvStencil(h, w));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update, in place. Moment buffers are created on
/// the first call to match the parameter shapes.
inline void adam_step(std::span<Tensor* const> params,
                      std::span<const std::span<const double>> grads, AdamState& st,
                      double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: arity mismatch");
  if (st.m.empty()) {
    for (Tensor* p : params) {
      st.m.emplace_back(p->numel(), 0.0);
      st.v.emplace_back(p->numel(), 0.0);
    }
  }
  if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: state mismatch");
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<double>& theta = params[k]->values;
    const auto g = grads[k];
    auto& m = st.m[k];
    auto& v = st.v[k];
    if (g.size() != theta.size() || m.size() != theta.size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + st.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Supervision substitution

struct SupervisionState {
  Image y_orig;
  Image y_current;
  int k = 0;

  SupervisionState() = default;
  explicit SupervisionState(Image y) : y_orig(y), y_current(std::move(y)) {}
};

/// y_current <- (y_orig + x_hat) / 2. Always blends with the original
/// observation, never with the previous supervision.
inline SupervisionState its_substitute(SupervisionState state, const Image& x_hat) {
  require_same_dims(state.y_orig, x_hat, "its_substitute");
  std::vector<double> px(x_hat.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = 0.5 * (state.y_orig.pixels()[i] + x_hat.pixels()[i]);
  }
  state.y_current = Image::from_values(x_hat.height(), x_hat.width(), x_hat.channels(),
                                       std::move(px));
  ++state.k;
  return state;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  Image final_image;
  std::vector<MetricsRecord> records;
  SupervisionState supervision;
  ModelParams params;
  bool diverged = false;
  std::string diagnostic;
  double wall_seconds = 0.0;
};

/// Called once per iteration with the iteration's (pre-update, unclamped)
/// network output and the supervision state after any substitution.
using TrainObserver =
    std::function<void(int iteration, const Tensor& output, const SupervisionState&)>;

inline MetricsRecord make_record(int iteration, double loss, const Image& pred,
                                 const Image& y_orig, const std::optional<Image>& clean) {
  MetricsRecord rec;
  rec.iteration = iteration;
  rec.loss = loss;
  rec.psnr_noisy = psnr(pred, y_orig);
  if (clean) {
    rec.psnr_clean = psnr(pred, *clean);
    if (pred.height() >= 11 && pred.width() >= 11) rec.ssim_clean = ssim(pred, *clean);
    if (pred.height() >= 2 && pred.width() >= 2) {
      rec.sigma_hat = mad_sigma(error_map(pred, *clean));
    }
  }
  return rec;
}

inline Tensor image_as_matrix(const Image& img) {
  return Tensor{Shape{img.pixel_count(), img.channels()}, img.pixels()};
}

inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const Image& noisy, const std::optional<Image>& clean = std::nullopt,
                         const TrainObserver& observer = {}) {
  model_cfg.validate();
  cfg.validate();
  if (noisy.channels() != model_cfg.out_channels) {
    throw std::invalid_argument("noisy image has " + std::to_string(noisy.channels()) +
                                " channels, model outputs " +
                                std::to_string(model_cfg.out_channels));
  }
  if (clean) require_same_dims(noisy, *clean, "train: clean vs noisy");

  const auto start = std::chrono::steady_clock::now();
  const std::size_t h = noisy.height(), w = noisy.width();
  const double lambda = cfg.effective_lambda();
  const CoordinateGrid grid = coordinate_grid(h, w);

  TrainResult result;
  result.supervision = SupervisionState(noisy);
  result.params = init_model(model_cfg);
  ModelParams& params = result.params;
  const Tensor input = network_input(params, model_cfg, grid);
  std::optional<TvStencil> stencil;
  if (lambda > 0.0) stencil.emplace(h, w);

  std::vector<Tensor*> trainable = params.trainable();
  AdamState adam;
  Tape tape;
  Tensor target = image_as_matrix(result.supervision.y_current);
  std::vector<std::span<const double>> grads(trainable.size());

  for (int it = 1; it <= cfg.iterations; ++it) {
    tape.reset();
    double loss_value = std::numeric_limits<double>::quiet_NaN();
    Image pred;
    try {
      const auto layers = bind_params(tape, params);
      Var out = forward_bound(model_cfg, layers, tape.constant(input), tape);
      Var loss = mse_loss(out, tape.constant(target));
      if (lambda > 0.0) loss = add(loss, scale(tv_regularizer(out, *stencil), lambda));
      loss_value = loss.value().values[0];
      pred = output_to_image(out.value(), h, w);

      tape.backward(loss);
      for (std::size_t k = 0; k < layers.size(); ++k) {
        grads[2 * k] = tape.grad(layers[k].weight);
        grads[2 * k + 1] = tape.grad(layers[k].bias);
      }
      adam_step(trainable, grads, adam, cfg.lr);

      if (cfg.its_period > 0 && it % cfg.its_period == 0) {
        result.supervision = its_substitute(std::move(result.supervision), pred);
        target = image_as_matrix(result.supervision.y_current);
      }
      if (observer) observer(it, out.value(), result.supervision);
    } catch (const std::domain_error& e) {
      MetricsRecord rec;
      rec.iteration = it;
      rec.loss = loss_value;
      rec.psnr_noisy = std::numeric_limits<double>::quiet_NaN();
      result.records.push_back(rec);
      result.diverged = true;
      result.diagnostic = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }

    if (it % cfg.log_every == 0 || it == cfg.iterations) {
      result.records.push_back(make_record(it, loss_value, pred, noisy, clean));
    }
    result.final_image = std::move(pred);
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace itsinr
