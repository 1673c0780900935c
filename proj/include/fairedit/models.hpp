// GCN, GraphSAGE (mean aggregator) and APPNP node classifiers emitting one
// logit per node.

#pragma once

#include "fairedit/autodiff.hpp"
#include "fairedit/graph.hpp"
#include "fairedit/propagation.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fairedit {

using Tape = ad::Tape<double>;
using Tensor = ad::Tensor<double>;
using Optimizer = ad::Optimizer<double>;
using ScoreMatrix = ad::ScoreMatrix<double>;
using NormalizedAdjacency = ad::EdgeOperator<double>;

enum class Architecture { GCN, SAGE, APPNP };

const char* to_string(Architecture a);
Architecture parse_architecture(const std::string& name);

struct ModelParams {
  Architecture architecture = Architecture::GCN;
  /// Interleaved [W_0, b_0, W_1, b_1, ...]; W_l is fan_in x fan_out (SAGE
  /// layers take 2 * fan_in inputs), b_l is 1 x fan_out.
  std::vector<MatrixXd> tensors;
  double teleport = 0.1;   // APPNP tau
  int power_iters = 10;    // APPNP T

  int depth() const { return static_cast<int>(tensors.size() / 2); }
  MatrixXd& weight(int layer) { return tensors[static_cast<std::size_t>(2 * layer)]; }
  const MatrixXd& weight(int layer) const { return tensors[static_cast<std::size_t>(2 * layer)]; }
  MatrixXd& bias(int layer) { return tensors[static_cast<std::size_t>(2 * layer + 1)]; }
  const MatrixXd& bias(int layer) const { return tensors[static_cast<std::size_t>(2 * layer + 1)]; }

  /// Throws std::invalid_argument when layer shapes do not chain to one
  /// output or the APPNP settings are out of range.
  void check(Eigen::Index in_features) const;
};

struct ModelShape {
  Architecture architecture = Architecture::GCN;
  int hidden = 16;
  int depth = 2;
  double teleport = 0.1;
  int power_iters = 10;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams init_params(const ModelShape& shape, Eigen::Index in_features, std::uint64_t seed);

/// Self-loop augmented symmetric normalization D^-1/2 (A + I) D^-1/2.
NormalizedAdjacency normalize_adjacency(const Graph& g);

/// Neighbour mean without self term; isolated nodes aggregate to zero.
NormalizedAdjacency mean_adjacency(const Graph& g);

/// The aggregation operator each architecture propagates with.
NormalizedAdjacency propagation_operator(Architecture a, const Graph& g);

/// Edge mask attached to a forward pass. `scores` must be the tape tensor of
/// `matrix.scores`.
struct MaskBinding {
  const ScoreMatrix* matrix = nullptr;
  Tensor scores;
};

/// Parameter tensors recorded on a tape, in ModelParams::tensors order.
std::vector<Tensor> bind(Tape& tape, const ModelParams& params, bool trainable);

/// Forward pass over explicit features and operator. Counts one forward
/// invocation per call (see forward_count()).
Tensor forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
               const NormalizedAdjacency& op, const MaskBinding* mask = nullptr);

Tensor gcn_forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
                   const NormalizedAdjacency& op, const MaskBinding* mask = nullptr);
Tensor sage_forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
                    const NormalizedAdjacency& op, const MaskBinding* mask = nullptr);
Tensor appnp_forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
                     const NormalizedAdjacency& op, const MaskBinding* mask = nullptr);

/// Inference convenience: n x 1 logits of `g` without gradient tracking.
MatrixXd logits(const ModelParams& params, const Graph& g);
MatrixXd logits(const ModelParams& params, const MatrixXd& features, const NormalizedAdjacency& op);

/// Label 1 iff logit > 0.
std::vector<int> predict(const MatrixXd& logits);

/// One optimizer step on the training-node BCE loss. Returns the pre-step loss.
double train_step(ModelParams& params, const Graph& g, Optimizer& optimizer);

/// Model forward invocations on the calling thread since the last reset.
std::size_t forward_count();
void reset_forward_count();

}  // namespace fairedit
