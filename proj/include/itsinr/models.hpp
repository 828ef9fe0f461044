#pragma once

// Coordinate networks f(z) -> intensity: SIREN (sine), WIRE (real Gabor
// wavelet) and a Fourier-feature ReLU MLP (FFN).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "itsinr/autodiff.hpp"
#include "itsinr/image.hpp"

namespace itsinr {

enum class ModelKind { siren, wire, ffn };

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "siren" || s == "SIREN") return ModelKind::siren;
  if (s == "wire" || s == "WIRE") return ModelKind::wire;
  if (s == "ffn" || s == "FFN") return ModelKind::ffn;
  throw std::invalid_argument("unknown model kind: " + s);
}

inline const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::siren: return "siren";
    case ModelKind::wire: return "wire";
    case ModelKind::ffn: return "ffn";
  }
  return "?";
}

struct ModelConfig {
  ModelKind kind = ModelKind::siren;
  std::size_t depth = 4;  // hidden layers
  std::size_t width = 128;
  std::size_t out_channels = 1;
  double omega0 = 30.0;
  double wire_omega = 20.0;
  double wire_s = 10.0;
  std::size_t ff_count = 128;
  double ff_scale = 10.0;
  std::uint64_t seed = 0;

  /// Per-kind defaults (FFN uses depth 3).
  static ModelConfig defaults(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    if (kind == ModelKind::ffn) cfg.depth = 3;
    return cfg;
  }

  std::size_t input_dim() const { return kind == ModelKind::ffn ? 2 * ff_count : 2; }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("model depth must be >= 1");
    if (width < 1) throw std::invalid_argument("model width must be >= 1");
    if (out_channels != 1 && out_channels != 3) {
      throw std::invalid_argument("out_channels must be 1 or 3");
    }
    switch (kind) {
      case ModelKind::siren:
        if (!(omega0 > 0.0)) throw std::invalid_argument("omega0 must be > 0");
        break;
      case ModelKind::wire:
        if (!(wire_omega > 0.0) || !(wire_s > 0.0)) {
          throw std::invalid_argument("wire_omega and wire_s must be > 0");
        }
        break;
      case ModelKind::ffn:
        if (ff_count < 1) throw std::invalid_argument("ff_count must be >= 1");
        if (!(ff_scale > 0.0)) throw std::invalid_argument("ff_scale must be > 0");
        break;
    }
  }
};

/// Weight is fan_in x fan_out (applied as u * W), bias is 1 x fan_out.
struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

struct ModelParams {
  std::vector<DenseLayer> layers;
  std::optional<Tensor> ff_matrix;  // ff_count x 2, frozen

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.numel() + l.bias.numel();
    return n;
  }

  /// Trainable tensors in a fixed order: W0, b0, W1, b1, ...
  std::vector<Tensor*> trainable() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<Tensor> trainable_values() const {
    std::vector<Tensor> out;
    for (const auto& l : layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    return out;
  }
};

struct CoordinateGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor coords;  // (H*W) x 2, row-major pixel order

  std::size_t size() const { return height * width; }
};

/// Pixel (r, c) maps to (-1 + 2r/(h-1), -1 + 2c/(w-1)); a length-1 axis maps to 0.
inline CoordinateGrid coordinate_grid(std::size_t h, std::size_t w) {
  if (h < 1 || w < 1) throw std::invalid_argument("coordinate grid needs h, w >= 1");
  auto axis = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  CoordinateGrid g{h, w, Tensor::zeros(Shape{h * w, 2})};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      g.coords.at(r * w + c, 0) = axis(r, h);
      g.coords.at(r * w + c, 1) = axis(c, w);
    }
  }
  return g;
}

namespace detail {

inline Tensor uniform_tensor(Shape shape, double bound, Prng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace detail

/// Deterministic given cfg.seed.
///   SIREN: first W ~ U(+-1/fan_in); later W ~ U(+-sqrt(6/fan_in)/omega0)
///   WIRE, FFN: W ~ U(+-sqrt(6/fan_in))
///   all biases ~ U(+-1/sqrt(fan_in))
///   FFN feature matrix ~ N(0, ff_scale^2), never trained
inline ModelParams init_model(const ModelConfig& cfg) {
  cfg.validate();
  Prng rng(cfg.seed);
  ModelParams p;
  if (cfg.kind == ModelKind::ffn) {
    Tensor b = Tensor::zeros(Shape{cfg.ff_count, 2});
    for (double& v : b.values) v = cfg.ff_scale * rng.normal();
    p.ff_matrix = std::move(b);
  }
  std::vector<std::size_t> dims{cfg.input_dim()};
  for (std::size_t i = 0; i < cfg.depth; ++i) dims.push_back(cfg.width);
  dims.push_back(cfg.out_channels);

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    const double fi = static_cast<double>(fan_in);
    double bound = std::sqrt(6.0 / fi);
    if (cfg.kind == ModelKind::siren) bound = l == 0 ? 1.0 / fi : bound / cfg.omega0;
    DenseLayer layer;
    layer.weight = detail::uniform_tensor(Shape{fan_in, fan_out}, bound, rng);
    layer.bias = detail::uniform_tensor(Shape{1, fan_out}, 1.0 / std::sqrt(fi), rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Real Gabor wavelet cos(omega v) * exp(-(s v)^2), scalar form.
inline double wire_activation(double v, double omega, double s) {
  return std::cos(omega * v) * std::exp(-(s * v) * (s * v));
}

/// Fixed Fourier features [sin(2 pi z B^T), cos(2 pi z B^T)], (H*W) x 2F.
inline Tensor fourier_features(const Tensor& coords, const Tensor& ff_matrix) {
  const std::size_t n = coords.rows(), f = ff_matrix.rows();
  Tensor out = Tensor::zeros(Shape{n, 2 * f});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const double arg = 2.0 * std::numbers::pi *
                         (coords.at(i, 0) * ff_matrix.at(j, 0) +
                          coords.at(i, 1) * ff_matrix.at(j, 1));
      out.at(i, j) = std::sin(arg);
      out.at(i, f + j) = std::cos(arg);
    }
  }
  return out;
}

struct LayerVars {
  Var weight;
  Var bias;
};

/// Puts the trainable tensors on the tape, in ModelParams::trainable() order.
inline std::vector<LayerVars> bind_params(Tape& tape, const ModelParams& params,
                                          bool requires_grad = true) {
  std::vector<LayerVars> out;
  for (const auto& l : params.layers) {
    out.push_back({tape.leaf(l.weight, requires_grad), tape.leaf(l.bias, requires_grad)});
  }
  return out;
}

/// Network input for a grid: raw coordinates, or Fourier features for FFN.
inline Tensor network_input(const ModelParams& params, const ModelConfig& cfg,
                            const CoordinateGrid& grid) {
  if (cfg.kind != ModelKind::ffn) return grid.coords;
  if (!params.ff_matrix) throw std::invalid_argument("FFN parameters lack a feature matrix");
  return fourier_features(grid.coords, *params.ff_matrix);
}

/// Forward pass over a precomputed network input (see network_input) with
/// parameters already bound to the tape. Returns the unclamped (H*W) x C output.
inline Var forward_bound(const ModelConfig& cfg, std::span<const LayerVars> layers,
                         Var input, Tape& tape) {
  if (layers.size() != cfg.depth + 1) {
    throw std::invalid_argument("parameter layer count does not match config depth");
  }
  if (input.tape() != &tape) throw std::invalid_argument("network input is not on this tape");
  Var u = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Var v = affine(u, layers[l].weight, layers[l].bias);
    if (l + 1 == layers.size()) return v;
    switch (cfg.kind) {
      case ModelKind::siren:
        u = sin(l == 0 ? scale(v, cfg.omega0) : v);
        break;
      case ModelKind::wire:
        u = mul(cos(scale(v, cfg.wire_omega)), exp(neg(square(scale(v, cfg.wire_s)))));
        break;
      case ModelKind::ffn:
        u = relu(v);
        break;
    }
  }
  return u;  // unreachable: depth >= 1 guarantees an output layer
}

inline void check_consistent(const ModelParams& params, const ModelConfig& cfg) {
  if (params.layers.size() != cfg.depth + 1) {
    throw std::invalid_argument("model params have " + std::to_string(params.layers.size()) +
                                " layers, config expects " + std::to_string(cfg.depth + 1));
  }
  std::size_t prev = cfg.input_dim();
  for (const auto& l : params.layers) {
    if (l.weight.shape.rank() != 2 || l.weight.shape[0] != prev ||
        l.bias.shape != Shape{1, l.weight.shape[1]}) {
      throw std::invalid_argument("model layer dimensions do not chain");
    }
    prev = l.weight.shape[1];
  }
  if (prev != cfg.out_channels) throw std::invalid_argument("model output width mismatch");
}

/// Records the full network for `grid` on `tape`, binding params as leaves.
inline Var forward(const ModelParams& params, const ModelConfig& cfg,
                   const CoordinateGrid& grid, Tape& tape, bool requires_grad = false) {
  check_consistent(params, cfg);
  const auto layers = bind_params(tape, params, requires_grad);
  Var input = tape.constant(network_input(params, cfg, grid));
  return forward_bound(cfg, layers, input, tape);
}

/// Reshapes an (H*W) x C network output into a clamped image.
inline Image output_to_image(const Tensor& out, std::size_t h, std::size_t w) {
  if (out.shape.rank() != 2 || out.shape[0] != h * w) {
    throw std::invalid_argument("network output does not match grid size");
  }
  return Image::clamped(h, w, out.shape[1], out.values);
}

inline Image predict_image(const ModelParams& params, const ModelConfig& cfg,
                           const CoordinateGrid& grid) {
  Tape tape;
  Var out = forward(params, cfg, grid, tape);
  return output_to_image(out.value(), grid.height, grid.width);
}

}  // namespace itsinr
