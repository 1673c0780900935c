// Attributed, undirected node-classification graph and the edits and views
// defined on it.

#pragma once

#include "fairedit/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fairedit {

/// Node-selection mask, one 0/1 byte per node.
using Mask = std::vector<std::uint8_t>;

/// Per-node data shared between a graph and its edited copies.
struct NodeData {
  MatrixXd features;            // n x d, includes the sensitive column
  int sensitive_column = 0;     // column of `features` mirroring `sensitive`
  std::vector<int> sensitive;   // 0/1
  std::vector<int> labels;      // 0/1, meaningful where label_known
  Mask label_known;
  Mask train, val, test;
};

/// Immutable-by-convention graph value. Edits and views return new graphs;
/// node data is shared by pointer until a view needs to change it.
class Graph {
 public:
  Graph() = default;
  Graph(std::shared_ptr<const NodeData> nodes, EdgeList edges);

  NodeId num_nodes() const { return static_cast<NodeId>(nodes_->sensitive.size()); }
  Eigen::Index num_features() const { return nodes_->features.cols(); }
  const EdgeList& edges() const { return edges_; }
  const NodeData& nodes() const { return *nodes_; }
  const std::shared_ptr<const NodeData>& node_data() const { return nodes_; }

  const MatrixXd& features() const { return nodes_->features; }
  const std::vector<int>& sensitive() const { return nodes_->sensitive; }
  const std::vector<int>& labels() const { return nodes_->labels; }
  int sensitive_column() const { return nodes_->sensitive_column; }
  const Mask& train_mask() const { return nodes_->train; }
  const Mask& val_mask() const { return nodes_->val; }
  const Mask& test_mask() const { return nodes_->test; }

  bool has_edge(Edge e) const;
  std::vector<int> degrees() const;

  /// Value equality over edges and all node data.
  friend bool operator==(const Graph& a, const Graph& b);

  Graph with_edges(EdgeList edges) const { return Graph(nodes_, std::move(edges)); }
  Graph with_nodes(std::shared_ptr<const NodeData> nodes) const { return Graph(std::move(nodes), edges_); }

 private:
  std::shared_ptr<const NodeData> nodes_ = std::make_shared<const NodeData>();
  EdgeList edges_;
};

/// Returns an empty string when every graph invariant holds, otherwise a
/// description of the first violation.
std::string validate(const Graph& g);

// ---------------------------------------------------------------------------
// Edits

enum class EditKind : std::uint8_t { Delete = 0, Add = 1 };

struct EdgeEdit {
  EditKind kind = EditKind::Add;
  Edge edge;

  static EdgeEdit add(NodeId a, NodeId b) { return {EditKind::Add, Edge::make(a, b)}; }
  static EdgeEdit remove(NodeId a, NodeId b) { return {EditKind::Delete, Edge::make(a, b)}; }

  EdgeEdit inverse() const { return {kind == EditKind::Add ? EditKind::Delete : EditKind::Add, edge}; }

  /// (kind, u, v) with Delete < Add; used for deterministic tie-breaking.
  auto operator<=>(const EdgeEdit&) const = default;
};

std::string to_string(const EdgeEdit& e);
const char* to_string(EditKind k);
std::ostream& operator<<(std::ostream& os, const EdgeEdit& e);

class EditError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Graph apply_edit(const Graph& g, const EdgeEdit& edit);

/// Counterfactual view: s -> 1 - s for every node, in both the sensitive
/// vector and its feature column.
Graph flip_sensitive(const Graph& g);

/// Adds N(0, sigma^2) noise to every non-sensitive feature entry.
Graph perturb_features(const Graph& g, double sigma, std::uint64_t seed);

struct Exhaustive {};
struct Sampled {
  double rho = 0.0;    // per absent cross-group pair: Add probability
  double gamma = 0.0;  // per present intra-group edge: Delete probability
  std::uint64_t seed = 0;
};

std::vector<EdgeEdit> candidate_edits(const Graph& g, const Exhaustive&);
std::vector<EdgeEdit> candidate_edits(const Graph& g, const Sampled& policy);

// ---------------------------------------------------------------------------
// Ingestion and preprocessing

struct NodeTable {
  MatrixXd features;
  std::vector<int> sensitive;
  std::vector<int> labels;
  int sensitive_column = 0;
  std::vector<std::string> feature_names;
};

NodeTable load_node_table(const std::filesystem::path& path, const std::string& sensitive_col,
                          const std::string& label_col);
NodeTable parse_node_table(std::istream& in, const std::string& sensitive_col,
                           const std::string& label_col);

EdgeList load_edge_list(const std::filesystem::path& path, NodeId n);
EdgeList parse_edge_list(std::istream& in, NodeId n);
void write_edge_list(std::ostream& out, const EdgeList& edges);

/// Z-scores every non-sensitive column with training-row statistics.
MatrixXd normalize_features(const MatrixXd& features, const Mask& train_mask, int sensitive_column);

struct Splits {
  Mask train, val, test;
};

/// Label-stratified random split over labeled nodes.
Splits split(NodeId n, std::array<double, 3> fractions, const std::vector<int>& labels,
             const Mask& label_known, std::uint64_t seed);

/// Assembles a graph from a loaded table and edge list, splitting and
/// normalizing with the given seed.
Graph build_graph(NodeTable table, EdgeList edges, std::array<double, 3> fractions, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic biased graphs

struct SyntheticSpec {
  NodeId n = 400;
  double groups = 0.5;        // fraction of nodes with s = 1
  double homophily = 0.9;     // probability an edge is intra-group
  double edge_density = 8.0;  // expected mean degree
  double label_bias = 0.8;    // corr(s, y)
  std::uint64_t seed = 0;
};

/// Two-block stochastic block model over the sensitive groups. Features are
/// [s, f_1 .. f_8] with f_j label-informative Gaussian noise; splits are
/// 50/25/25 and features normalized.
Graph synth_biased_graph(const SyntheticSpec& spec);

}  // namespace fairedit
