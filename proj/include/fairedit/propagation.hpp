// Sparse neighbourhood aggregation with an optional learnable edge mask.

#pragma once

#include "fairedit/autodiff.hpp"
#include "fairedit/types.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairedit::ad {

/// Linear operator out = P * h where P has the sparsity of an undirected
/// edge set plus an optional diagonal. Each edge carries one coefficient per
/// direction: `to_v` scales h[u] into row v and `to_u` scales h[v] into row u.
template <typename Scalar>
struct EdgeOperator {
  struct Entry {
    Edge edge;
    Scalar to_u;
    Scalar to_v;
  };

  Eigen::Index n = 0;
  std::vector<Entry> entries;          // sorted by edge
  std::vector<Scalar> diagonal;        // empty means no self term

  /// Disjoint union of `copies` replicas, node ids offset by n per copy.
  EdgeOperator replicate(int copies) const {
    EdgeOperator out;
    out.n = n * copies;
    out.entries.reserve(entries.size() * static_cast<std::size_t>(copies));
    for (int c = 0; c < copies; ++c) {
      const auto off = static_cast<NodeId>(n * c);
      for (const auto& e : entries) {
        out.entries.push_back({Edge{e.edge.u + off, e.edge.v + off}, e.to_u, e.to_v});
      }
    }
    if (!diagonal.empty()) {
      for (int c = 0; c < copies; ++c) out.diagonal.insert(out.diagonal.end(), diagonal.begin(), diagonal.end());
    }
    return out;
  }

  Matrix<Scalar> dense() const {
    Matrix<Scalar> p = Matrix<Scalar>::Zero(n, n);
    for (const auto& e : entries) {
      p(e.edge.u, e.edge.v) += e.to_u;
      p(e.edge.v, e.edge.u) += e.to_v;
    }
    for (std::size_t i = 0; i < diagonal.size(); ++i) {
      p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += diagonal[i];
    }
    return p;
  }
};

/// Learnable per-edge scores for a host edge set. The masked adjacency entry
/// of edge e is sigmoid(scores(e)).
template <typename Scalar>
struct ScoreMatrix {
  EdgeList host;                 // sorted, unique
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scores;

  ScoreMatrix() = default;
  ScoreMatrix(EdgeList edges, Scalar initial) : host(std::move(edges)) {
    std::sort(host.begin(), host.end());
    host.erase(std::unique(host.begin(), host.end()), host.end());
    scores = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(static_cast<Eigen::Index>(host.size()), initial);
  }

  std::optional<std::size_t> index_of(const Edge& e) const {
    auto it = std::lower_bound(host.begin(), host.end(), e);
    if (it == host.end() || *it != e) return std::nullopt;
    return static_cast<std::size_t>(it - host.begin());
  }

  Scalar mask_value(const Edge& e) const {
    auto i = index_of(e);
    return i ? sigmoid(scores(static_cast<Eigen::Index>(*i))) : Scalar(0);
  }
};

/// Unmasked aggregation, out = P * h.
template <typename Scalar>
Tensor<Scalar> spmm(const EdgeOperator<Scalar>& op, const Tensor<Scalar>& h) {
  if (h.rows() != op.n) {
    throw ShapeError("spmm: operator has " + std::to_string(op.n) + " rows, features have " +
                     std::to_string(h.rows()));
  }
  const auto ih = h.id();
  const auto& hv = h.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(hv.rows(), hv.cols());
  for (const auto& e : op.entries) {
    out.row(e.edge.v) += e.to_v * hv.row(e.edge.u);
    out.row(e.edge.u) += e.to_u * hv.row(e.edge.v);
  }
  for (std::size_t i = 0; i < op.diagonal.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) += op.diagonal[i] * hv.row(r);
  }
  // The operator is captured by value; callers may rebuild theirs freely.
  return h.tape().record(std::move(out), {ih}, [ih, op](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& dh = t.grad_mut(ih);
    for (const auto& e : op.entries) {
      dh.row(e.edge.u) += e.to_v * g.row(e.edge.v);
      dh.row(e.edge.v) += e.to_u * g.row(e.edge.u);
    }
    for (std::size_t i = 0; i < op.diagonal.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      dh.row(r) += op.diagonal[i] * g.row(r);
    }
  });
}

/// Masked aggregation: each off-diagonal term of `op` is rescaled by
/// sigmoid(score) of its edge. `scores` is the tape tensor holding
/// mask.scores (|host| x 1); gradients flow to both h and scores. Every edge
/// of `op` must belong to the mask's host edge set. The diagonal is unmasked.
template <typename Scalar>
Tensor<Scalar> masked_spmm(const EdgeOperator<Scalar>& op, const ScoreMatrix<Scalar>& mask,
                           const Tensor<Scalar>& scores, const Tensor<Scalar>& h) {
  detail::require_same_tape(scores, h);
  if (h.rows() != op.n) throw ShapeError("masked_spmm: feature rows differ from operator size");
  if (scores.rows() != static_cast<Eigen::Index>(mask.host.size()) || scores.cols() != 1) {
    throw ShapeError("masked_spmm: score tensor does not match mask host");
  }
  std::vector<std::size_t> slot(op.entries.size());
  for (std::size_t k = 0; k < op.entries.size(); ++k) {
    auto i = mask.index_of(op.entries[k].edge);
    if (!i) {
      throw std::invalid_argument("masked_spmm: edge (" + std::to_string(op.entries[k].edge.u) + "," +
                                  std::to_string(op.entries[k].edge.v) + ") is not in the mask host");
    }
    slot[k] = *i;
  }
  const auto& hv = h.value();
  const auto& sv = scores.value();
  std::vector<Scalar> gate(op.entries.size());
  Matrix<Scalar> out = Matrix<Scalar>::Zero(hv.rows(), hv.cols());
  for (std::size_t k = 0; k < op.entries.size(); ++k) {
    const auto& e = op.entries[k];
    gate[k] = sigmoid(sv(static_cast<Eigen::Index>(slot[k]), 0));
    out.row(e.edge.v) += (e.to_v * gate[k]) * hv.row(e.edge.u);
    out.row(e.edge.u) += (e.to_u * gate[k]) * hv.row(e.edge.v);
  }
  for (std::size_t i = 0; i < op.diagonal.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) += op.diagonal[i] * hv.row(r);
  }
  const auto ih = h.id(), is = scores.id();
  return h.tape().record(
      std::move(out), {ih, is},
      [ih, is, op, slot = std::move(slot), gate = std::move(gate)](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const bool want_h = t.requires_grad(ih);
        const bool want_s = t.requires_grad(is);
        const auto& hv = t.value(ih);
        for (std::size_t k = 0; k < op.entries.size(); ++k) {
          const auto& e = op.entries[k];
          const auto u = e.edge.u, v = e.edge.v;
          if (want_h) {
            t.grad_mut(ih).row(u) += (e.to_v * gate[k]) * g.row(v);
            t.grad_mut(ih).row(v) += (e.to_u * gate[k]) * g.row(u);
          }
          if (want_s) {
            const Scalar dgate = e.to_v * g.row(v).dot(hv.row(u)) + e.to_u * g.row(u).dot(hv.row(v));
            t.grad_mut(is)(static_cast<Eigen::Index>(slot[k]), 0) += dgate * gate[k] * (Scalar(1) - gate[k]);
          }
        }
        if (want_h) {
          for (std::size_t i = 0; i < op.diagonal.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            t.grad_mut(ih).row(r) += op.diagonal[i] * g.row(r);
          }
        }
      });
}

}  // namespace fairedit::ad
