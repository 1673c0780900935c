// Predictive and fairness metrics for binary node classifiers.

#pragma once

#include "fairedit/graph.hpp"
#include "fairedit/models.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairedit {

/// A group-conditional rate needed by a metric is undefined on the given
/// nodes (for instance one sensitive group is absent).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct FairnessReport {
  double f1 = 0;
  double unfairness = 0;   // counterfactual flip rate
  double instability = 0;
  double delta_sp = 0;
  double delta_eo = 0;
  // metadata
  std::uint64_t seed = 0;
  double sigma = 0;
  std::string node_set = "test";
  std::size_t nodes = 0;
};

double f1_score(std::span<const int> pred, std::span<const int> truth, const Mask& mask);
double delta_sp(std::span<const int> pred, std::span<const int> sensitive, const Mask& mask);
double delta_eo(std::span<const int> pred, std::span<const int> truth, std::span<const int> sensitive,
                const Mask& mask);

/// Predictions for two feature matrices sharing one structure, computed by a
/// single forward pass over the disjoint union of both views.
std::pair<std::vector<int>, std::vector<int>> paired_predictions(const ModelParams& params, const MatrixXd& first,
                                                                 const MatrixXd& second,
                                                                 const NormalizedAdjacency& op);

/// Fraction of masked nodes whose prediction differs between two label vectors.
double changed_fraction(std::span<const int> a, std::span<const int> b, const Mask& mask);

/// Fraction of masked nodes whose prediction changes when every node's
/// sensitive attribute is flipped. One model forward invocation.
double counterfactual_unfairness(const ModelParams& params, const Graph& g, const Mask& mask);

/// Fraction of masked nodes whose prediction changes under Gaussian feature
/// noise of standard deviation sigma.
double instability(const ModelParams& params, const Graph& g, const Mask& mask, double sigma, std::uint64_t seed);

struct EvalOptions {
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

/// All five metrics on the graph's test mask.
FairnessReport evaluate(const ModelParams& params, const Graph& g, const EvalOptions& options = {});

}  // namespace fairedit
