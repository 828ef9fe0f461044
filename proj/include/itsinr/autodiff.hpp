#pragma once

// Define-by-run reverse-mode automatic differentiation over dense 64-bit
// tensors. A Tape records every forward op in topological order; backward
// walks it in reverse and accumulates gradients into each node that
// requires them.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "itsinr/fastmath.hpp"

namespace itsinr {

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::size_t numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                           std::multiplies<>());
  }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) os << ',';
      os << dims_[i];
    }
    os << ']';
    return os.str();
  }

 private:
  std::vector<std::size_t> dims_;
};

/// Dense row-major tensor value. Carries no graph information; see Var.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  std::size_t numel() const { return values.size(); }
  std::size_t rows() const { return shape.rank() >= 1 ? shape[0] : 1; }
  std::size_t cols() const { return shape.rank() >= 2 ? shape[1] : 1; }

  double at(std::size_t r, std::size_t c) const {
    return values[r * cols() + c];
  }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }

  static Tensor zeros(Shape s) {
    const std::size_t n = s.numel();
    return {std::move(s), std::vector<double>(n, 0.0)};
  }
  static Tensor filled(Shape s, double v) {
    const std::size_t n = s.numel();
    return {std::move(s), std::vector<double>(n, v)};
  }
};

namespace detail {

inline void require_finite(std::span<const double> values, const char* op) {
  int bad = 0;
  for (double v : values) bad |= !(std::fabs(v) <= std::numeric_limits<double>::max());
  if (bad) throw std::domain_error(std::string("non-finite value produced by ") + op);
}

// Elementwise ops run in cache-sized blocks so the finiteness check reads
// values that were just written.
inline constexpr std::size_t kBlock = 4096;

template <class F>
void blocked_checked(double* out, std::size_t n, const char* op, F&& body) {
  for (std::size_t lo = 0; lo < n; lo += kBlock) {
    const std::size_t hi = std::min(n, lo + kBlock);
    body(lo, hi);
    require_finite({out + lo, hi - lo}, op);
  }
}

inline void validate_shape(const Shape& shape) {
  if (shape.rank() == 0) throw std::invalid_argument("tensor shape is empty");
  for (std::size_t d : shape.dims()) {
    if (d == 0) throw std::invalid_argument("tensor dimension must be >= 1");
  }
}

}  // namespace detail

/// Validated construction: shape must be non-empty with positive dims and
/// match the value count; every value must be finite.
inline Tensor tensor_of(Shape shape, std::vector<double> values) {
  detail::validate_shape(shape);
  if (shape.numel() != values.size()) {
    throw std::invalid_argument("tensor length mismatch: shape " + shape.str() +
                                " needs " + std::to_string(shape.numel()) +
                                " values, got " + std::to_string(values.size()));
  }
  detail::require_finite(values, "tensor_of");
  return {std::move(shape), std::move(values)};
}

enum class UnaryOp { sin, cos, exp, neg, square, relu, abs };
enum class BinaryOp { add, sub, mul };

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is reset.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a leaf. Validates the tensor the same way tensor_of does.
  Var leaf(const Tensor& t, bool requires_grad = true) {
    detail::validate_shape(t.shape);
    if (t.shape.numel() != t.values.size()) {
      throw std::invalid_argument("tensor length mismatch for shape " +
                                  t.shape.str());
    }
    detail::require_finite(t.values, "leaf");
    Node& n = push(Kind::leaf, t.shape, requires_grad);
    std::copy(t.values.begin(), t.values.end(), n.value.values.begin());
    return handle();
  }
  Var constant(const Tensor& t) { return leaf(t, false); }

  /// Drops all nodes. Buffers are kept and reused by the next recording,
  /// so a training loop that rebuilds the same graph does not reallocate.
  void reset() { size_ = 0; }

  std::size_t size() const { return size_; }

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  Var matmul(Var a, Var b) {
    const Shape sa = node(a).value.shape;
    const Shape sb = node(b).value.shape;
    if (sa.rank() != 2 || sb.rank() != 2 || sa[1] != sb[0]) {
      throw std::invalid_argument("matmul dimension mismatch: " + sa.str() +
                                  " x " + sb.str());
    }
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    Node& out = push(Kind::matmul, Shape{m, n}, any_grad(a, b), a, b);
    const Tensor& av = nodes_[a.id_].value;
    const Tensor& bv = nodes_[b.id_].value;
    map_mut(out.value.values.data(), m, n).noalias() =
        map(av.values.data(), m, k) * map(bv.values.data(), k, n);
    detail::require_finite(out.value.values, "matmul");
    return handle();
  }

  /// x W + 1 b for x (m x k), W (k x n) and a bias row b (1 x n) added to
  /// every output row. Same result as matmul(x, W) + matmul(ones(m x 1), b)
  /// without materializing the broadcast.
  Var affine(Var x, Var w, Var b) {
    const Shape sx = node(x).value.shape;
    const Shape sw = node(w).value.shape;
    const Shape sb = node(b).value.shape;
    if (sx.rank() != 2 || sw.rank() != 2 || sx[1] != sw[0]) {
      throw std::invalid_argument("affine dimension mismatch: " + sx.str() + " x " + sw.str());
    }
    if (!(sb == Shape{1, sw[1]})) {
      throw std::invalid_argument("affine bias must be " + Shape{1, sw[1]}.str() + ", got " +
                                  sb.str());
    }
    const std::size_t m = sx[0], k = sx[1], n = sw[1];
    const bool rg = any_grad(x, w) || node(b).requires_grad;
    Node& out = push(Kind::affine, Shape{m, n}, rg, x, w);
    out.in2 = b.id_;
    const Tensor& xv = nodes_[x.id_].value;
    const Tensor& wv = nodes_[w.id_].value;
    const double* bias = nodes_[b.id_].value.values.data();
    double* o = out.value.values.data();
    map_mut(o, m, n).noalias() = map(xv.values.data(), m, k) * map(wv.values.data(), k, n);
    const std::size_t rows_per_block = std::max<std::size_t>(1, detail::kBlock / n);
    for (std::size_t r0 = 0; r0 < m; r0 += rows_per_block) {
      const std::size_t r1 = std::min(m, r0 + rows_per_block);
      for (std::size_t r = r0; r < r1; ++r) {
        double* row = o + r * n;
        for (std::size_t c = 0; c < n; ++c) row[c] += bias[c];
      }
      detail::require_finite({o + r0 * n, (r1 - r0) * n}, "affine");
    }
    return handle();
  }

  Var unary(UnaryOp op, Var x) {
    Node& out = push(Kind::unary, node(x).value.shape, node(x).requires_grad, x);
    const Tensor& xv = nodes_[x.id_].value;
    out.unary = op;
    const std::size_t n = xv.numel();
    const double* in = xv.values.data();
    double* o = out.value.values.data();
    if (op == UnaryOp::sin || op == UnaryOp::cos) out.aux.resize(n);
    double* aux = out.aux.data();
    detail::blocked_checked(o, n, "map_unary", [&](std::size_t lo, std::size_t hi) {
      const std::size_t len = hi - lo;
      switch (op) {
        case UnaryOp::sin:
          fastmath::sincos({in + lo, len}, {o + lo, len}, {aux + lo, len});
          break;
        case UnaryOp::cos:
          fastmath::sincos({in + lo, len}, {aux + lo, len}, {o + lo, len});
          break;
        case UnaryOp::exp:
          for (std::size_t i = lo; i < hi; ++i) o[i] = std::exp(in[i]);
          break;
        case UnaryOp::neg:
          for (std::size_t i = lo; i < hi; ++i) o[i] = -in[i];
          break;
        case UnaryOp::square:
          for (std::size_t i = lo; i < hi; ++i) o[i] = in[i] * in[i];
          break;
        case UnaryOp::relu:
          for (std::size_t i = lo; i < hi; ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
          break;
        case UnaryOp::abs:
          for (std::size_t i = lo; i < hi; ++i) o[i] = std::fabs(in[i]);
          break;
      }
    });
    return handle();
  }

  Var binary(BinaryOp op, Var a, Var b) {
    const Shape sa = node(a).value.shape;
    const Shape sb = node(b).value.shape;
    const bool broadcast = !(sa == sb);
    if (broadcast && sb.numel() != 1) {
      throw std::invalid_argument("zip_binary shape mismatch: " + sa.str() +
                                  " vs " + sb.str());
    }
    Node& out = push(Kind::binary, sa, any_grad(a, b), a, b);
    const Tensor& av = nodes_[a.id_].value;
    const Tensor& bv = nodes_[b.id_].value;
    out.binary = op;
    const std::size_t n = av.numel();
    const double* x = av.values.data();
    const double* y = bv.values.data();
    double* o = out.value.values.data();
    const std::size_t ys = broadcast ? 0 : 1;
    detail::blocked_checked(o, n, "zip_binary", [&](std::size_t lo, std::size_t hi) {
      switch (op) {
        case BinaryOp::add:
          for (std::size_t i = lo; i < hi; ++i) o[i] = x[i] + y[i * ys];
          break;
        case BinaryOp::sub:
          for (std::size_t i = lo; i < hi; ++i) o[i] = x[i] - y[i * ys];
          break;
        case BinaryOp::mul:
          for (std::size_t i = lo; i < hi; ++i) o[i] = x[i] * y[i * ys];
          break;
      }
    });
    return handle();
  }

  Var scale(Var x, double c) {
    if (!std::isfinite(c)) throw std::invalid_argument("scale factor not finite");
    Node& out = push(Kind::scale, node(x).value.shape, node(x).requires_grad, x);
    const Tensor& xv = nodes_[x.id_].value;
    out.scalar = c;
    const double* in = xv.values.data();
    double* o = out.value.values.data();
    detail::blocked_checked(o, xv.numel(), "scale", [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) o[i] = c * in[i];
    });
    return handle();
  }

  Var mean_all(Var x) {
    Node& out = push(Kind::mean_all, Shape{1}, node(x).requires_grad, x);
    const Tensor& xv = nodes_[x.id_].value;
    const double s = std::accumulate(xv.values.begin(), xv.values.end(), 0.0);
    out.value.values[0] = s / static_cast<double>(xv.numel());
    detail::require_finite(out.value.values, "mean_all");
    return handle();
  }

  /// Selects rows of a 2-D tensor: out[i, :] = x[rows[i], :].
  Var gather_rows(Var x, std::span<const std::size_t> rows) {
    const Shape sx = node(x).value.shape;
    if (sx.rank() != 2) throw std::invalid_argument("gather_rows needs 2-D input");
    if (rows.empty()) throw std::invalid_argument("gather_rows needs at least one row");
    const std::size_t cols = sx[1];
    for (std::size_t r : rows) {
      if (r >= sx[0]) throw std::out_of_range("gather_rows index out of range");
    }
    Node& out = push(Kind::gather_rows, Shape{rows.size(), cols},
                     node(x).requires_grad, x);
    const Tensor& xv = nodes_[x.id_].value;
    out.index.assign(rows.begin(), rows.end());
    const double* in = xv.values.data();
    double* o = out.value.values.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(in + rows[i] * cols, cols, o + i * cols);
    }
    return handle();
  }

  /// Reverse sweep from a scalar root. Afterwards grad(v) holds d root / d v
  /// for every node that requires a gradient.
  void backward(Var root) {
    const Node& r = node(root);
    if (r.value.numel() != 1) {
      throw std::invalid_argument("backward root must be scalar, got shape " +
                                  r.value.shape.str());
    }
    for (std::size_t i = 0; i < size_; ++i) nodes_[i].grad_ready = false;
    if (!r.requires_grad) return;
    seed_grad(root.id_, 1.0);
    for (std::size_t id = root.id_ + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.grad_ready || n.kind == Kind::leaf) continue;
      propagate(n);
    }
  }

  /// Gradient of the last backward root with respect to v. Zero when v did
  /// not influence the root.
  std::span<const double> grad(Var v) {
    Node& n = node_mut(v);
    if (!n.grad_ready) {
      n.grad.assign(n.value.numel(), 0.0);
      n.grad_ready = true;
    }
    return n.grad;
  }

 private:
  enum class Kind { leaf, matmul, affine, unary, binary, scale, mean_all, gather_rows };

  struct Node {
    Kind kind = Kind::leaf;
    UnaryOp unary = UnaryOp::neg;
    BinaryOp binary = BinaryOp::add;
    std::size_t in0 = 0, in1 = 0, in2 = 0;
    double scalar = 0.0;
    bool requires_grad = false;
    bool grad_ready = false;
    Tensor value;
    std::vector<double> grad;
    std::vector<double> aux;
    std::vector<std::size_t> index;
  };

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  static Eigen::Map<const RowMat> map(const double* p, std::size_t r, std::size_t c) {
    return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
  }
  static Eigen::Map<RowMat> map_mut(double* p, std::size_t r, std::size_t c) {
    return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
  }

  const Node& node(Var v) const {
    if (v.tape_ != this || v.id_ >= size_) {
      throw std::invalid_argument("Var does not belong to this tape");
    }
    return nodes_[v.id_];
  }
  Node& node_mut(Var v) {
    if (v.tape_ != this || v.id_ >= size_) {
      throw std::invalid_argument("Var does not belong to this tape");
    }
    return nodes_[v.id_];
  }
  bool any_grad(Var a, Var b) const {
    return node(a).requires_grad || node(b).requires_grad;
  }

  Node& push(Kind kind, Shape shape, bool requires_grad, Var a = {}, Var b = {}) {
    if (size_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[size_++];
    n.kind = kind;
    n.in0 = a.id_;
    n.in1 = b.id_;
    n.requires_grad = requires_grad;
    n.grad_ready = false;
    n.value.values.resize(shape.numel());
    n.value.shape = std::move(shape);
    return n;
  }
  Var handle() { return Var(this, size_ - 1); }

  void seed_grad(std::size_t id, double v) {
    Node& n = nodes_[id];
    n.grad.assign(n.value.numel(), v);
    n.grad_ready = true;
  }

  // Returns the gradient buffer of node `id` for accumulation; `fresh` is set
  // when the buffer holds no prior contribution and must be overwritten.
  double* grad_target(std::size_t id, bool& fresh) {
    Node& n = nodes_[id];
    fresh = !n.grad_ready;
    if (fresh) {
      n.grad.resize(n.value.numel());
      n.grad_ready = true;
    }
    return n.grad.data();
  }

  template <class F>
  void accumulate(std::size_t id, F&& contribution) {
    if (!nodes_[id].requires_grad) return;
    bool fresh = false;
    double* g = grad_target(id, fresh);
    const std::size_t n = nodes_[id].value.numel();
    if (fresh) {
      for (std::size_t i = 0; i < n; ++i) g[i] = contribution(i);
    } else {
      for (std::size_t i = 0; i < n; ++i) g[i] += contribution(i);
    }
  }

  void propagate(const Node& n) {
    const double* g = n.grad.data();
    const std::size_t count = n.value.numel();
    switch (n.kind) {
      case Kind::leaf:
        return;
      case Kind::matmul: {
        const Tensor& a = nodes_[n.in0].value;
        const Tensor& b = nodes_[n.in1].value;
        const std::size_t m = a.shape[0], k = a.shape[1], cols = b.shape[1];
        auto gm = map(g, m, cols);
        if (nodes_[n.in0].requires_grad) {
          bool fresh = false;
          auto da = map_mut(grad_target(n.in0, fresh), m, k);
          if (fresh) {
            da.noalias() = gm * map(b.values.data(), k, cols).transpose();
          } else {
            da.noalias() += gm * map(b.values.data(), k, cols).transpose();
          }
        }
        if (nodes_[n.in1].requires_grad) {
          bool fresh = false;
          auto db = map_mut(grad_target(n.in1, fresh), k, cols);
          if (fresh) {
            db.noalias() = map(a.values.data(), m, k).transpose() * gm;
          } else {
            db.noalias() += map(a.values.data(), m, k).transpose() * gm;
          }
        }
        return;
      }
      case Kind::affine: {
        const Tensor& x = nodes_[n.in0].value;
        const Tensor& w = nodes_[n.in1].value;
        const std::size_t m = x.shape[0], k = x.shape[1], cols = w.shape[1];
        auto gm = map(g, m, cols);
        if (nodes_[n.in0].requires_grad) {
          bool fresh = false;
          auto dx = map_mut(grad_target(n.in0, fresh), m, k);
          if (fresh) {
            dx.noalias() = gm * map(w.values.data(), k, cols).transpose();
          } else {
            dx.noalias() += gm * map(w.values.data(), k, cols).transpose();
          }
        }
        if (nodes_[n.in1].requires_grad) {
          bool fresh = false;
          auto dw = map_mut(grad_target(n.in1, fresh), k, cols);
          if (fresh) {
            dw.noalias() = map(x.values.data(), m, k).transpose() * gm;
          } else {
            dw.noalias() += map(x.values.data(), m, k).transpose() * gm;
          }
        }
        if (nodes_[n.in2].requires_grad) {
          bool fresh = false;
          double* db = grad_target(n.in2, fresh);
          if (fresh) std::fill_n(db, cols, 0.0);
          for (std::size_t r = 0; r < m; ++r) {
            const double* row = g + r * cols;
            for (std::size_t c = 0; c < cols; ++c) db[c] += row[c];
          }
        }
        return;
      }
      case Kind::unary: {
        const double* x = nodes_[n.in0].value.values.data();
        const double* y = n.value.values.data();
        const double* aux = n.aux.data();
        switch (n.unary) {
          case UnaryOp::sin:
            accumulate(n.in0, [&](std::size_t i) { return g[i] * aux[i]; });
            break;
          case UnaryOp::cos:
            accumulate(n.in0, [&](std::size_t i) { return -g[i] * aux[i]; });
            break;
          case UnaryOp::exp:
            accumulate(n.in0, [&](std::size_t i) { return g[i] * y[i]; });
            break;
          case UnaryOp::neg:
            accumulate(n.in0, [&](std::size_t i) { return -g[i]; });
            break;
          case UnaryOp::square:
            accumulate(n.in0, [&](std::size_t i) { return 2.0 * x[i] * g[i]; });
            break;
          case UnaryOp::relu:
            accumulate(n.in0, [&](std::size_t i) { return x[i] > 0.0 ? g[i] : 0.0; });
            break;
          case UnaryOp::abs:
            accumulate(n.in0, [&](std::size_t i) {
              return x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
            });
            break;
        }
        return;
      }
      case Kind::binary: {
        const double* a = nodes_[n.in0].value.values.data();
        const double* b = nodes_[n.in1].value.values.data();
        const bool broadcast = nodes_[n.in1].value.numel() != count;
        const std::size_t bs = broadcast ? 0 : 1;
        const double sign_b = n.binary == BinaryOp::sub ? -1.0 : 1.0;
        if (n.binary == BinaryOp::mul) {
          accumulate(n.in0, [&](std::size_t i) { return g[i] * b[i * bs]; });
        } else {
          accumulate(n.in0, [&](std::size_t i) { return g[i]; });
        }
        if (!nodes_[n.in1].requires_grad) return;
        if (broadcast) {
          double s = 0.0;
          for (std::size_t i = 0; i < count; ++i) {
            s += n.binary == BinaryOp::mul ? g[i] * a[i] : g[i];
          }
          accumulate(n.in1, [&](std::size_t) { return sign_b * s; });
        } else if (n.binary == BinaryOp::mul) {
          accumulate(n.in1, [&](std::size_t i) { return g[i] * a[i]; });
        } else {
          accumulate(n.in1, [&](std::size_t i) { return sign_b * g[i]; });
        }
        return;
      }
      case Kind::scale: {
        const double c = n.scalar;
        accumulate(n.in0, [&](std::size_t i) { return c * g[i]; });
        return;
      }
      case Kind::mean_all: {
        const double share = g[0] / static_cast<double>(nodes_[n.in0].value.numel());
        accumulate(n.in0, [&](std::size_t) { return share; });
        return;
      }
      case Kind::gather_rows: {
        Node& src = nodes_[n.in0];
        bool fresh = false;
        double* dst = grad_target(n.in0, fresh);
        if (fresh) std::fill_n(dst, src.value.numel(), 0.0);
        const std::size_t cols = n.value.shape[1];
        for (std::size_t i = 0; i < n.index.size(); ++i) {
          double* row = dst + n.index[i] * cols;
          for (std::size_t c = 0; c < cols; ++c) row[c] += g[i * cols + c];
        }
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::size_t size_ = 0;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("unbound Var");
  return tape_->value(*this);
}
inline bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

namespace detail {
inline Tape& tape_of(Var a) {
  if (!a.tape()) throw std::logic_error("unbound Var");
  return *a.tape();
}
}  // namespace detail

inline Var matmul(Var a, Var b) { return detail::tape_of(a).matmul(a, b); }
inline Var affine(Var x, Var w, Var b) { return detail::tape_of(x).affine(x, w, b); }
inline Var map_unary(UnaryOp op, Var x) { return detail::tape_of(x).unary(op, x); }
inline Var zip_binary(BinaryOp op, Var a, Var b) {
  return detail::tape_of(a).binary(op, a, b);
}
inline Var scale(Var x, double c) { return detail::tape_of(x).scale(x, c); }
inline Var mean_all(Var x) { return detail::tape_of(x).mean_all(x); }
inline Var gather_rows(Var x, std::span<const std::size_t> rows) {
  return detail::tape_of(x).gather_rows(x, rows);
}

inline Var sin(Var x) { return map_unary(UnaryOp::sin, x); }
inline Var cos(Var x) { return map_unary(UnaryOp::cos, x); }
inline Var exp(Var x) { return map_unary(UnaryOp::exp, x); }
inline Var neg(Var x) { return map_unary(UnaryOp::neg, x); }
inline Var square(Var x) { return map_unary(UnaryOp::square, x); }
inline Var relu(Var x) { return map_unary(UnaryOp::relu, x); }
inline Var abs(Var x) { return map_unary(UnaryOp::abs, x); }
inline Var add(Var a, Var b) { return zip_binary(BinaryOp::add, a, b); }
inline Var sub(Var a, Var b) { return zip_binary(BinaryOp::sub, a, b); }
inline Var mul(Var a, Var b) { return zip_binary(BinaryOp::mul, a, b); }

/// A scalar-valued function of several parameter tensors, expressed on a tape.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `f` at `params` against central
/// differences with step `h`. Returns the max over all parameter entries of
/// |analytic - numeric| / max(|analytic|, 1e-8).
inline double finite_diff_check(const TapeFunction& f, std::vector<Tensor> params,
                                double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    Var root = f(tape, leaves);
    tape.backward(root);
    for (Var v : leaves) {
      auto g = tape.grad(v);
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.constant(p));
    return f(tape, leaves).value().values.at(0);
  };

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].values.size(); ++i) {
      const double saved = params[t].values[i];
      params[t].values[i] = saved + h;
      const double up = evaluate();
      params[t].values[i] = saved - h;
      const double down = evaluate();
      params[t].values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      worst = std::max(worst, std::fabs(a - numeric) / std::max(std::fabs(a), 1e-8));
    }
  }
  return worst;
}

}  // namespace itsinr
