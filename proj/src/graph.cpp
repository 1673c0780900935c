#include "fairedit/graph.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <sstream>

namespace fairedit {

Graph::Graph(std::shared_ptr<const NodeData> nodes, EdgeList edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  std::sort(edges_.begin(), edges_.end());
}

bool Graph::has_edge(Edge e) const { return std::binary_search(edges_.begin(), edges_.end(), e); }

std::vector<int> Graph::degrees() const {
  std::vector<int> deg(static_cast<std::size_t>(num_nodes()), 0);
  for (const auto& e : edges_) {
    ++deg[static_cast<std::size_t>(e.u)];
    ++deg[static_cast<std::size_t>(e.v)];
  }
  return deg;
}

bool operator==(const Graph& a, const Graph& b) {
  if (a.edges_ != b.edges_) return false;
  if (a.nodes_ == b.nodes_) return true;
  const auto& x = *a.nodes_;
  const auto& y = *b.nodes_;
  return x.features.rows() == y.features.rows() && x.features.cols() == y.features.cols() &&
         x.features == y.features && x.sensitive_column == y.sensitive_column &&
         x.sensitive == y.sensitive && x.labels == y.labels && x.label_known == y.label_known &&
         x.train == y.train && x.val == y.val && x.test == y.test;
}

std::string validate(const Graph& g) {
  const auto n = g.num_nodes();
  const auto& nd = g.nodes();
  const auto un = static_cast<std::size_t>(n);
  if (nd.features.rows() != n) return "feature rows differ from node count";
  if (nd.labels.size() != un || nd.label_known.size() != un) return "label vector length differs from node count";
  if (nd.train.size() != un || nd.val.size() != un || nd.test.size() != un) return "split mask length differs from node count";
  for (std::size_t k = 0; k < g.edges().size(); ++k) {
    const auto& e = g.edges()[k];
    if (e.u < 0 || e.v >= n || e.u >= n || e.v < 0) return "edge endpoint out of range";
    if (e.u >= e.v) return "edge not stored as u < v";
    if (k > 0 && !(g.edges()[k - 1] < e)) return "edge list not strictly sorted";
  }
  for (std::size_t i = 0; i < un; ++i) {
    if (nd.sensitive[i] != 0 && nd.sensitive[i] != 1) return "non-binary sensitive value";
    if (nd.label_known[i] && nd.labels[i] != 0 && nd.labels[i] != 1) return "non-binary label";
    if (int(nd.train[i]) + int(nd.val[i]) + int(nd.test[i]) > 1) return "split masks overlap";
  }
  if (nd.features.cols() > 0) {
    if (nd.sensitive_column < 0 || nd.sensitive_column >= nd.features.cols()) return "sensitive column out of range";
    for (std::size_t i = 0; i < un; ++i) {
      if (nd.features(static_cast<Eigen::Index>(i), nd.sensitive_column) != nd.sensitive[i]) {
        return "sensitive feature column disagrees with sensitive vector";
      }
    }
  }
  return {};
}

const char* to_string(EditKind k) { return k == EditKind::Add ? "add" : "delete"; }

std::string to_string(const EdgeEdit& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const EdgeEdit& e) {
  return os << to_string(e.kind) << '(' << e.edge.u << ',' << e.edge.v << ')';
}

Graph apply_edit(const Graph& g, const EdgeEdit& edit) {
  const auto& e = edit.edge;
  if (e.u == e.v) throw EditError("edit " + to_string(edit) + " is a self-loop");
  if (e.u > e.v) throw EditError("edit " + to_string(edit) + " endpoints not ordered");
  if (e.u < 0 || e.v >= g.num_nodes()) throw EditError("edit " + to_string(edit) + " out of range");

  EdgeList edges = g.edges();
  auto it = std::lower_bound(edges.begin(), edges.end(), e);
  const bool present = it != edges.end() && *it == e;
  if (edit.kind == EditKind::Add) {
    if (present) throw EditError("cannot add existing edge " + to_string(edit));
    edges.insert(it, e);
  } else {
    if (!present) throw EditError("cannot delete missing edge " + to_string(edit));
    edges.erase(it);
  }
  return g.with_edges(std::move(edges));
}

Graph flip_sensitive(const Graph& g) {
  auto nd = std::make_shared<NodeData>(g.nodes());
  for (auto& s : nd->sensitive) s = 1 - s;
  if (nd->features.cols() > 0) {
    auto col = nd->features.col(nd->sensitive_column);
    col = (1.0 - col.array()).matrix();
  }
  return g.with_nodes(std::move(nd));
}

Graph perturb_features(const Graph& g, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("perturb_features: sigma must be non-negative");
  auto nd = std::make_shared<NodeData>(g.nodes());
  if (sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    auto& x = nd->features;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (j == nd->sensitive_column) continue;
        x(i, j) += noise(rng);
      }
    }
  }
  return g.with_nodes(std::move(nd));
}

std::vector<EdgeEdit> candidate_edits(const Graph& g, const Exhaustive&) {
  const auto n = g.num_nodes();
  std::vector<EdgeEdit> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(std::max(n - 1, 0)) / 2);
  auto it = g.edges().begin();
  const auto end = g.edges().end();
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const Edge e{u, v};
      if (it != end && *it == e) {
        out.push_back({EditKind::Delete, e});
        ++it;
      } else {
        out.push_back({EditKind::Add, e});
      }
    }
  }
  return out;
}

std::vector<EdgeEdit> candidate_edits(const Graph& g, const Sampled& policy) {
  if (policy.rho < 0 || policy.rho > 1 || policy.gamma < 0 || policy.gamma > 1) {
    throw std::invalid_argument("candidate_edits: rho and gamma must lie in [0,1]");
  }
  const auto n = g.num_nodes();
  const auto& s = g.sensitive();
  std::mt19937_64 rng(policy.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<EdgeEdit> out;
  auto it = g.edges().begin();
  const auto end = g.edges().end();
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const Edge e{u, v};
      const bool present = it != end && *it == e;
      if (present) ++it;
      const bool same = s[static_cast<std::size_t>(u)] == s[static_cast<std::size_t>(v)];
      if (present && same) {
        if (coin(rng) < policy.gamma) out.push_back({EditKind::Delete, e});
      } else if (!present && !same) {
        if (coin(rng) < policy.rho) out.push_back({EditKind::Add, e});
      }
    }
  }
  return out;
}

}  // namespace fairedit
