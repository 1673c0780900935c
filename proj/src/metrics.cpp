#include "fairedit/metrics.hpp"

#include <cmath>

namespace fairedit {

namespace {

void check_lengths(std::size_t n, const Mask& mask, std::initializer_list<std::size_t> others) {
  if (mask.size() != n) throw std::invalid_argument("metric: mask length differs from prediction length");
  for (auto m : others) {
    if (m != n) throw std::invalid_argument("metric: vector lengths differ");
  }
}

bool any(const Mask& mask) {
  for (auto m : mask) {
    if (m) return true;
  }
  return false;
}

struct Rate {
  std::size_t hits = 0;
  std::size_t total = 0;
};

double gap(const Rate& a, const Rate& b, const char* what) {
  if (a.total == 0 || b.total == 0) {
    throw UndefinedMetricError(std::string(what) + ": a sensitive group has no qualifying nodes");
  }
  return std::abs(static_cast<double>(a.hits) / static_cast<double>(a.total) -
                  static_cast<double>(b.hits) / static_cast<double>(b.total));
}

}  // namespace

double f1_score(std::span<const int> pred, std::span<const int> truth, const Mask& mask) {
  check_lengths(pred.size(), mask, {truth.size()});
  if (!any(mask)) throw std::invalid_argument("f1_score: empty mask");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (truth[i]) ++fn;
  }
  if (tp == 0) return 0.0;
  return static_cast<double>(tp) / (static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn));
}

double delta_sp(std::span<const int> pred, std::span<const int> sensitive, const Mask& mask) {
  check_lengths(pred.size(), mask, {sensitive.size()});
  Rate r[2];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    auto& g = r[sensitive[i] ? 1 : 0];
    ++g.total;
    g.hits += pred[i] ? 1 : 0;
  }
  return gap(r[1], r[0], "delta_sp");
}

double delta_eo(std::span<const int> pred, std::span<const int> truth, std::span<const int> sensitive,
                const Mask& mask) {
  check_lengths(pred.size(), mask, {truth.size(), sensitive.size()});
  Rate r[2];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i] || !truth[i]) continue;
    auto& g = r[sensitive[i] ? 1 : 0];
    ++g.total;
    g.hits += pred[i] ? 1 : 0;
  }
  return gap(r[1], r[0], "delta_eo");
}

std::pair<std::vector<int>, std::vector<int>> paired_predictions(const ModelParams& params, const MatrixXd& first,
                                                                 const MatrixXd& second,
                                                                 const NormalizedAdjacency& op) {
  if (first.rows() != op.n || second.rows() != op.n || first.cols() != second.cols()) {
    throw std::invalid_argument("paired_predictions: view shapes differ");
  }
  MatrixXd stacked(2 * op.n, first.cols());
  stacked << first, second;
  const auto both = predict(logits(params, stacked, op.replicate(2)));
  const auto n = static_cast<std::ptrdiff_t>(op.n);
  return {std::vector<int>(both.begin(), both.begin() + n), std::vector<int>(both.begin() + n, both.end())};
}

double changed_fraction(std::span<const int> a, std::span<const int> b, const Mask& mask) {
  check_lengths(a.size(), mask, {b.size()});
  std::size_t changed = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    changed += a[i] != b[i] ? 1 : 0;
  }
  if (total == 0) throw std::invalid_argument("changed_fraction: empty mask");
  return static_cast<double>(changed) / static_cast<double>(total);
}

double counterfactual_unfairness(const ModelParams& params, const Graph& g, const Mask& mask) {
  if (!any(mask)) throw std::invalid_argument("counterfactual_unfairness: empty mask");
  const auto flipped = flip_sensitive(g);
  const auto [factual, counterfactual] = paired_predictions(
      params, g.features(), flipped.features(), propagation_operator(params.architecture, g));
  return changed_fraction(factual, counterfactual, mask);
}

double instability(const ModelParams& params, const Graph& g, const Mask& mask, double sigma, std::uint64_t seed) {
  if (!any(mask)) throw std::invalid_argument("instability: empty mask");
  const auto noisy = perturb_features(g, sigma, seed);
  const auto [clean, perturbed] = paired_predictions(params, g.features(), noisy.features(),
                                                     propagation_operator(params.architecture, g));
  return changed_fraction(clean, perturbed, mask);
}

FairnessReport evaluate(const ModelParams& params, const Graph& g, const EvalOptions& options) {
  const auto& test = g.test_mask();
  if (!any(test)) throw std::invalid_argument("evaluate: empty test mask");
  const auto pred = predict(logits(params, g));
  FairnessReport r;
  r.f1 = f1_score(pred, g.labels(), test);
  r.unfairness = counterfactual_unfairness(params, g, test);
  r.instability = instability(params, g, test, options.sigma, options.seed);
  r.delta_sp = delta_sp(pred, g.sensitive(), test);
  r.delta_eo = delta_eo(pred, g.labels(), g.sensitive(), test);
  r.seed = options.seed;
  r.sigma = options.sigma;
  r.node_set = "test";
  r.nodes = static_cast<std::size_t>(std::count(test.begin(), test.end(), 1));
  return r;
}

}  // namespace fairedit
