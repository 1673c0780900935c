// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation as it is evaluated. Tensors are light
// handles (tape, index) into that record. backward() walks the record in
// reverse insertion order, which is a valid topological order because every
// node only references nodes created before it.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairedit::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  // Receives the tape so closures never hold dangling references to nodes
  // while the node vector grows.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Scalar> constant(Mat value) { return push(std::move(value), false, {}, {}); }

  /// Leaf whose gradient accumulates across backward passes until zero_grad().
  Tensor<Scalar> variable(Mat value) {
    return push(std::move(value), true, {}, {}, /*leaf=*/true);
  }

  Tensor<Scalar> record(Mat value, std::vector<std::size_t> parents, BackwardFn fn) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_[p].requires_grad;
    if (!needs) return push(std::move(value), false, {}, {});
    return push(std::move(value), true, std::move(parents), std::move(fn));
  }

  const Mat& value(std::size_t id) const { return nodes_.at(id).value; }
  const Mat& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient slot of a node, for use inside backward closures.
  Mat& grad_mut(std::size_t id) { return nodes_[id].grad; }

  void accumulate(std::size_t id, const Mat& delta) {
    auto& node = nodes_[id];
    if (!node.requires_grad) return;
    node.grad += delta;
  }

  /// Fills gradients of every requires-grad node reachable from `loss`.
  /// Intermediate gradients are reset first; leaf gradients accumulate.
  void backward(const Tensor<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ShapeError("backward requires a scalar loss, got " +
                       std::to_string(loss.rows()) + "x" + std::to_string(loss.cols()));
    }
    const std::size_t root = loss.id();
    for (std::size_t i = 0; i <= root; ++i) {
      if (!nodes_[i].leaf) nodes_[i].grad.setZero();
    }
    if (!nodes_[root].requires_grad) return;
    nodes_[root].grad(0, 0) += Scalar(1);
    for (std::size_t i = root + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.requires_grad && node.backward) node.backward(*this, i);
    }
  }

  void zero_grad() {
    for (auto& node : nodes_) node.grad.setZero();
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool leaf = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Tensor<Scalar> push(Mat value, bool requires_grad, std::vector<std::size_t> parents,
                      BackwardFn fn, bool leaf = false) {
    Node node;
    node.grad = Mat::Zero(value.rows(), value.cols());
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.leaf = leaf;
    node.parents = std::move(parents);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Tensor<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("tensors live on different tapes");
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  }
  const auto ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_mut(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_mut(ib).noalias() += t.value(ia).transpose() * g;
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {ia, ib},
                         [ia, ib](Tape<Scalar>& t, std::size_t self) {
                           t.accumulate(ia, t.grad(self));
                           t.accumulate(ib, t.grad(self));
                         });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {ia, ib},
                         [ia, ib](Tape<Scalar>& t, std::size_t self) {
                           t.accumulate(ia, t.grad(self));
                           t.accumulate(ib, -t.grad(self));
                         });
}

/// Elementwise product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "mul");
  const auto ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_mut(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad_mut(ib) += g.cwiseProduct(t.value(ia));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  const auto ia = a.id();
  return a.tape().record(a.value() * factor, {ia}, [ia, factor](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self) * factor);
  });
}

/// x (n x c) plus a 1 x c row broadcast to every row.
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& x, const Tensor<Scalar>& row) {
  detail::require_same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: expected 1x" + std::to_string(x.cols()) + " row");
  }
  const auto ix = x.id(), ir = row.id();
  Matrix<Scalar> out = x.value().rowwise() + row.value().row(0);
  return x.tape().record(std::move(out), {ix, ir}, [ix, ir](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    t.accumulate(ix, g);
    if (t.requires_grad(ir)) t.grad_mut(ir) += g.colwise().sum();
  });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  const auto ia = a.id(), ib = b.id();
  const Eigen::Index p = a.cols(), q = b.cols();
  Matrix<Scalar> out(a.rows(), p + q);
  out << a.value(), b.value();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, p, q](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_mut(ia) += g.leftCols(p);
    if (t.requires_grad(ib)) t.grad_mut(ib) += g.rightCols(q);
  });
}

/// Mean of each row: n x c -> n x 1.
template <typename Scalar>
Tensor<Scalar> row_mean(const Tensor<Scalar>& x) {
  if (x.cols() == 0) throw ShapeError("row_mean: zero columns");
  const auto ix = x.id();
  const Scalar inv = Scalar(1) / Scalar(x.cols());
  const Eigen::Index c = x.cols();
  Matrix<Scalar> out = x.value().rowwise().mean();
  return x.tape().record(std::move(out), {ix}, [ix, inv, c](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ix, (t.grad(self) * inv).replicate(1, c));
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  const auto ix = x.id();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  const auto r = x.rows(), c = x.cols();
  return x.tape().record(std::move(out), {ix}, [ix, r, c](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ix, Matrix<Scalar>::Constant(r, c, t.grad(self)(0, 0)));
  });
}

/// relu'(0) is taken as 0.
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  const auto ix = x.id();
  Matrix<Scalar> out = x.value().cwiseMax(Scalar(0));
  return x.tape().record(std::move(out), {ix}, [ix](Tape<Scalar>& t, std::size_t self) {
    const auto& in = t.value(ix);
    Matrix<Scalar> d = (in.array() > Scalar(0)).select(t.grad(self).array(), Scalar(0)).matrix();
    t.accumulate(ix, d);
  });
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  const auto ix = x.id();
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar z) { return sigmoid(z); });
  return x.tape().record(std::move(out), {ix}, [ix](Tape<Scalar>& t, std::size_t self) {
    const auto& s = t.value(self);
    Matrix<Scalar> d = t.grad(self).cwiseProduct(s.cwiseProduct((Scalar(1) - s.array()).matrix()));
    t.accumulate(ix, d);
  });
}

/// Sum of absolute differences, with d|a-b|/da taken as 0 where a == b.
template <typename Scalar>
Tensor<Scalar> l1_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "l1_diff");
  const auto ia = a.id(), ib = b.id();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = (a.value() - b.value()).cwiseAbs().sum();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)(0, 0);
    Matrix<Scalar> sign = (t.value(ia) - t.value(ib)).unaryExpr([](Scalar d) {
      return d > Scalar(0) ? Scalar(1) : (d < Scalar(0) ? Scalar(-1) : Scalar(0));
    });
    t.accumulate(ia, sign * g);
    t.accumulate(ib, -sign * g);
  });
}

/// Mean binary cross-entropy over the selected rows of an n x 1 logit column,
/// evaluated as max(z,0) - z*y + log(1 + exp(-|z|)).
template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, std::span<const int> targets,
                               std::span<const std::uint8_t> mask) {
  const auto n = static_cast<std::size_t>(logits.rows());
  if (logits.cols() != 1) throw ShapeError("bce_with_logits: logits must be n x 1");
  if (targets.size() != n || mask.size() != n) {
    throw ShapeError("bce_with_logits: targets/mask length must equal logit rows");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) rows.push_back(i);
  }
  if (rows.empty()) throw std::invalid_argument("bce_with_logits: empty mask");

  const auto& z = logits.value();
  Scalar total = 0;
  std::vector<Scalar> y(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    y[k] = targets[i] ? Scalar(1) : Scalar(0);
    const Scalar zi = z(static_cast<Eigen::Index>(i), 0);
    total += std::max(zi, Scalar(0)) - zi * y[k] + std::log1p(std::exp(-std::abs(zi)));
  }
  const Scalar inv = Scalar(1) / Scalar(rows.size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total * inv;
  const auto il = logits.id();
  return logits.tape().record(
      std::move(out), {il},
      [il, rows = std::move(rows), y = std::move(y), inv](Tape<Scalar>& t, std::size_t self) {
        if (!t.requires_grad(il)) return;
        const Scalar g = t.grad(self)(0, 0) * inv;
        const auto& zv = t.value(il);
        auto& dz = t.grad_mut(il);
        for (std::size_t k = 0; k < rows.size(); ++k) {
          const auto i = static_cast<Eigen::Index>(rows[k]);
          dz(i, 0) += g * (sigmoid(zv(i, 0)) - y[k]);
        }
      });
}

enum class OptimizerKind { SGD, Adam };

/// SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8) over a fixed list of
/// parameter matrices. Moments are allocated on the first step.
template <typename Scalar>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Scalar learning_rate) : kind_(kind), lr_(learning_rate) {
    if (!(learning_rate > Scalar(0))) {
      throw std::invalid_argument("optimizer learning rate must be positive");
    }
  }

  /// Zero learning rate is accepted only by this factory, for tests that
  /// need a step with no effect.
  static Optimizer frozen(OptimizerKind kind) {
    Optimizer o(kind, Scalar(1));
    o.lr_ = 0;
    return o;
  }

  OptimizerKind kind() const { return kind_; }
  Scalar learning_rate() const { return lr_; }
  long steps() const { return t_; }

  /// Applies one update then clears `grads`.
  void step(std::span<Matrix<Scalar>> params, std::span<Matrix<Scalar>> grads) {
    if (params.size() != grads.size()) {
      throw ShapeError("optimizer: parameter/gradient count mismatch");
    }
    if (kind_ == OptimizerKind::Adam && m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
      }
    }
    if (kind_ == OptimizerKind::Adam && m_.size() != params.size()) {
      throw ShapeError("optimizer: parameter list changed between steps");
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      auto& g = grads[i];
      if (p.rows() != g.rows() || p.cols() != g.cols()) {
        throw ShapeError("optimizer: gradient shape differs from parameter shape");
      }
      if (kind_ == OptimizerKind::SGD) {
        p -= lr_ * g;
      } else {
        if (m_[i].rows() != p.rows() || m_[i].cols() != p.cols()) {
          throw ShapeError("optimizer: moment shape differs from parameter shape");
        }
        constexpr Scalar b1 = Scalar(0.9), b2 = Scalar(0.999), eps = Scalar(1e-8);
        m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
        v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
        const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
        const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
        p.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
      }
      g.setZero();
    }
  }

 private:
  OptimizerKind kind_;
  Scalar lr_;
  long t_ = 0;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
};

}  // namespace fairedit::ad
