// Fairness-driven graph editing interleaved with model training: exhaustive
// greedy search over single-edge edits, and gradient-guided selection through
// a sigmoid edge mask (FairEdit).

#pragma once

#include "fairedit/graph.hpp"
#include "fairedit/metrics.hpp"
#include "fairedit/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairedit {

enum class EvalNodes { Train, Val };

struct EditTrainConfig {
  int alpha = 10;       // edit budget: epochs 1..alpha perform one edit each
  int epochs = 1000;    // K
  double rho = 0.01;    // cross-group add probability
  double gamma = 0.05;  // intra-group delete probability
  int mask_iters = 5;
  double mask_lr = 0.01;
  double binarize_threshold = 0.5;
  double mask_init = 0.95;  // sigmoid of the initial edge score
  EvalNodes eval_nodes = EvalNodes::Train;
  std::uint64_t seed = 0;
  /// Largest node count for which exhaustive enumeration is attempted.
  NodeId candidate_cap = 500;
  /// When set, larger graphs evaluate this many uniformly sampled candidates
  /// per edit epoch instead of refusing.
  std::optional<std::size_t> sample_cap;

  /// Throws std::invalid_argument on an out-of-range field.
  void check() const;
};

/// Exhaustive enumeration refused because the graph is too large.
class CandidateLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TraceEntry {
  int epoch = 0;
  std::optional<EdgeEdit> edit;  // empty when the epoch had no candidates
  double score = 0;
};

struct EditTrace {
  std::vector<TraceEntry> entries;

  std::size_t applied() const;
};

/// One line per entry: "epoch kind u v score"; an epoch without an edit is
/// written as "epoch none -1 -1 0".
void write_trace(std::ostream& out, const EditTrace& trace);
EditTrace read_trace(std::istream& in);

const Mask& eval_mask(const Graph& g, EvalNodes nodes);

// ---------------------------------------------------------------------------
// Exhaustive selection

struct Selection {
  EdgeEdit edit;
  double score = 0;     // counterfactual unfairness of the edited graph
  double baseline = 0;  // counterfactual unfairness before the edit
};

/// Evaluates counterfactual unfairness after each candidate edit with the
/// current parameters and returns the minimiser; ties go to the smallest
/// (kind, u, v) with Delete < Add. Costs |candidates| + 1 forward passes.
Selection brute_force_select(const ModelParams& params, const Graph& g, std::span<const EdgeEdit> candidates,
                             const Mask& eval_mask);

// ---------------------------------------------------------------------------
// Gradient-guided selection

struct CounterfactualGraph {
  Graph graph;
  std::vector<EdgeEdit> edits;
};

/// Samples cross-group additions (probability rho) and intra-group deletions
/// (probability gamma) and applies them to g.
CounterfactualGraph generate_counterfactual_graph(const Graph& g, double rho, double gamma, std::uint64_t seed);

/// L1 distance between the masked forward passes of g and g_star. Edges
/// whose mask value falls below `threshold` are dropped from the propagation
/// structure. When the gradient outputs are non-null they receive dL/dscores.
double mask_loss(const ModelParams& params, const Graph& g, const ScoreMatrix& mask_g, const Graph& g_star,
                 const ScoreMatrix& mask_star, double threshold, Eigen::VectorXd* grad_g = nullptr,
                 Eigen::VectorXd* grad_star = nullptr);

struct EdgeSensitivity {
  std::map<EdgeEdit, double> importance;
  double loss = 0;  // L at the final mask iteration
};

/// Refines edge masks on g and g_star by gradient ascent on mask_loss and
/// returns |dL/dscore| per edit: additions read g_star's mask, deletions
/// read g's. Costs exactly 2 * mask_iters forward passes.
EdgeSensitivity edge_sensitivity_scores(const ModelParams& params, const Graph& g, const Graph& g_star,
                                        std::span<const EdgeEdit> edits, const EditTrainConfig& config);

/// Edit with the largest importance; ties go to the smallest edit.
EdgeEdit select_edit(const std::map<EdgeEdit, double>& importance);

// ---------------------------------------------------------------------------
// Training loops

struct TrainResult {
  ModelParams params;
  Graph graph;
  EditTrace trace;
};

/// K plain optimizer steps on a fixed graph.
TrainResult train_standard(ModelParams params, Graph g, Optimizer& optimizer, int epochs);

TrainResult train_bruteforce(ModelParams params, Graph g, Optimizer& optimizer, const EditTrainConfig& config);

TrainResult train_fairedit(ModelParams params, Graph g, Optimizer& optimizer, const EditTrainConfig& config);

}  // namespace fairedit
