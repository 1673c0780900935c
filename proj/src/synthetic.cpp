#include "fairedit/graph.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace fairedit {

namespace {

constexpr int kNoisyFeatures = 8;
// Per-feature shift of the class means, in noise standard deviations.
constexpr double kFeatureSignal = 0.5;

}  // namespace

Graph synth_biased_graph(const SyntheticSpec& spec) {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(spec.groups) || !in_unit(spec.homophily) || !in_unit(spec.label_bias)) {
    throw std::invalid_argument("synthetic spec: groups, homophily and label_bias must lie in [0,1]");
  }
  if (!(spec.edge_density > 0)) throw std::invalid_argument("synthetic spec: edge_density must be positive");
  if (spec.n < 6) throw std::invalid_argument("synthetic spec: need at least 6 nodes");

  const auto n = spec.n;
  const auto un = static_cast<std::size_t>(n);
  std::mt19937_64 rng(spec.seed);

  // Sensitive groups: exactly round(groups * n) members with s = 1.
  std::vector<int> s(un, 0);
  const auto ones = static_cast<std::size_t>(std::llround(spec.groups * n));
  std::fill(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(ones), 1);
  std::shuffle(s.begin(), s.end(), rng);

  // Block edge probabilities giving mean degree edge_density with an
  // intra-group share of homophily.
  const double n1 = static_cast<double>(ones);
  const double n0 = static_cast<double>(un - ones);
  const double intra_pairs = n1 * (n1 - 1) / 2 + n0 * (n0 - 1) / 2;
  const double cross_pairs = n1 * n0;
  const double expected_edges = n * spec.edge_density / 2;
  const double p_in = intra_pairs > 0 ? spec.homophily * expected_edges / intra_pairs : 0.0;
  const double p_out = cross_pairs > 0 ? (1 - spec.homophily) * expected_edges / cross_pairs : 0.0;
  if (p_in > 1.0 || p_out > 1.0 || (intra_pairs == 0 && spec.homophily > 0) ||
      (cross_pairs == 0 && spec.homophily < 1)) {
    throw std::invalid_argument("synthetic spec: edge density infeasible for n = " + std::to_string(n));
  }

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  EdgeList edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const bool same = s[static_cast<std::size_t>(u)] == s[static_cast<std::size_t>(v)];
      if (coin(rng) < (same ? p_in : p_out)) edges.push_back({u, v});
    }
  }

  // y copies s with probability label_bias, otherwise is a fair coin, so
  // corr(s, y) = label_bias for balanced groups.
  std::vector<int> y(un);
  for (std::size_t i = 0; i < un; ++i) {
    y[i] = coin(rng) < spec.label_bias ? s[i] : (coin(rng) < 0.5 ? 1 : 0);
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  MatrixXd x(n, 1 + kNoisyFeatures);
  for (std::size_t i = 0; i < un; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = s[i];
    for (int j = 1; j <= kNoisyFeatures; ++j) x(r, j) = kFeatureSignal * (2 * y[i] - 1) + noise(rng);
  }

  auto nd = std::make_shared<NodeData>();
  nd->sensitive = s;
  nd->labels = y;
  nd->label_known = Mask(un, true);
  nd->sensitive_column = 0;
  auto splits = split(n, {0.5, 0.25, 0.25}, y, nd->label_known, rng());
  nd->features = normalize_features(x, splits.train, 0);
  nd->train = std::move(splits.train);
  nd->val = std::move(splits.val);
  nd->test = std::move(splits.test);
  return Graph(std::move(nd), std::move(edges));
}

}  // namespace fairedit
