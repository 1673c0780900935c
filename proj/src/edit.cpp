#include "fairedit/edit.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace fairedit {

namespace {

// Per-epoch seed for the counterfactual sampler; SplitMix64 finaliser.
std::uint64_t mix(std::uint64_t seed, std::uint64_t epoch) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

EdgeList active_edges(const ScoreMatrix& mask, double threshold) {
  EdgeList kept;
  kept.reserve(mask.host.size());
  for (std::size_t k = 0; k < mask.host.size(); ++k) {
    if (ad::sigmoid(mask.scores(static_cast<Eigen::Index>(k))) >= threshold) kept.push_back(mask.host[k]);
  }
  return kept;
}

}  // namespace

void EditTrainConfig::check() const {
  if (alpha < 0) throw std::invalid_argument("alpha must be non-negative");
  if (epochs < 0) throw std::invalid_argument("epoch count K must be non-negative");
  if (alpha > epochs) throw std::invalid_argument("alpha must not exceed K");
  if (rho < 0 || rho > 1 || gamma < 0 || gamma > 1) throw std::invalid_argument("rho and gamma must lie in [0,1]");
  if (!(binarize_threshold > 0 && binarize_threshold < 1)) {
    throw std::invalid_argument("binarize_threshold must lie in (0,1)");
  }
  if (!(mask_init > 0 && mask_init < 1)) throw std::invalid_argument("mask_init must lie in (0,1)");
  if (mask_iters < 1) throw std::invalid_argument("mask_iters must be at least 1");
  if (!(mask_lr >= 0)) throw std::invalid_argument("mask_lr must be non-negative");
  if (candidate_cap < 0) throw std::invalid_argument("candidate_cap must be non-negative");
  if (sample_cap && *sample_cap == 0) throw std::invalid_argument("sample cap must be positive");
}

std::size_t EditTrace::applied() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const TraceEntry& e) { return e.edit.has_value(); }));
}

void write_trace(std::ostream& out, const EditTrace& trace) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : trace.entries) {
    if (e.edit) {
      out << e.epoch << ' ' << to_string(e.edit->kind) << ' ' << e.edit->edge.u << ' ' << e.edit->edge.v << ' '
          << e.score << '\n';
    } else {
      out << e.epoch << " none -1 -1 0\n";
    }
  }
  out.precision(old);
}

EditTrace read_trace(std::istream& in) {
  EditTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    TraceEntry e;
    std::string kind;
    long long u = 0, v = 0;
    if (!(ss >> e.epoch >> kind >> u >> v >> e.score)) throw DataError("malformed trace line '" + line + "'");
    if (kind == "add" || kind == "delete") {
      e.edit = EdgeEdit{kind == "add" ? EditKind::Add : EditKind::Delete,
                        Edge::make(static_cast<NodeId>(u), static_cast<NodeId>(v))};
    } else if (kind != "none") {
      throw DataError("unknown edit kind '" + kind + "' in trace");
    }
    trace.entries.push_back(e);
  }
  return trace;
}

const Mask& eval_mask(const Graph& g, EvalNodes nodes) {
  return nodes == EvalNodes::Train ? g.train_mask() : g.val_mask();
}

Selection brute_force_select(const ModelParams& params, const Graph& g, std::span<const EdgeEdit> candidates,
                             const Mask& eval_mask) {
  if (candidates.empty()) throw std::invalid_argument("brute_force_select: empty candidate list");
  Selection best;
  best.baseline = counterfactual_unfairness(params, g, eval_mask);
  bool have = false;
  for (const auto& edit : candidates) {
    const double score = counterfactual_unfairness(params, apply_edit(g, edit), eval_mask);
    if (!have || score < best.score || (score == best.score && edit < best.edit)) {
      best.edit = edit;
      best.score = score;
      have = true;
    }
  }
  return best;
}

CounterfactualGraph generate_counterfactual_graph(const Graph& g, double rho, double gamma, std::uint64_t seed) {
  CounterfactualGraph out{g, candidate_edits(g, Sampled{rho, gamma, seed})};
  EdgeList edges = g.edges();
  EdgeList added;
  for (const auto& e : out.edits) {
    if (e.kind == EditKind::Add) added.push_back(e.edge);
  }
  // Apply all edits in one pass; each is valid against g and they touch
  // distinct pairs.
  EdgeList kept;
  kept.reserve(edges.size() + added.size());
  auto del = out.edits.begin();
  for (const auto& e : edges) {
    while (del != out.edits.end() && (del->kind != EditKind::Delete || del->edge < e)) ++del;
    if (del != out.edits.end() && del->edge == e) continue;
    kept.push_back(e);
  }
  kept.insert(kept.end(), added.begin(), added.end());
  out.graph = g.with_edges(std::move(kept));
  return out;
}

double mask_loss(const ModelParams& params, const Graph& g, const ScoreMatrix& mask_g, const Graph& g_star,
                 const ScoreMatrix& mask_star, double threshold, Eigen::VectorXd* grad_g,
                 Eigen::VectorXd* grad_star) {
  const auto arch = params.architecture;
  const auto op_g = propagation_operator(arch, g.with_edges(active_edges(mask_g, threshold)));
  const auto op_star = propagation_operator(arch, g_star.with_edges(active_edges(mask_star, threshold)));

  Tape tape;
  const auto bound = bind(tape, params, false);
  const MaskBinding bind_g{&mask_g, tape.variable(mask_g.scores)};
  const MaskBinding bind_star{&mask_star, tape.variable(mask_star.scores)};
  const Tensor out_g = forward(params, bound, tape.constant(g.features()), op_g, &bind_g);
  const Tensor out_star = forward(params, bound, tape.constant(g_star.features()), op_star, &bind_star);
  const Tensor loss = ad::l1_diff(out_g, out_star);
  if (grad_g || grad_star) {
    tape.backward(loss);
    if (grad_g) *grad_g = bind_g.scores.grad();
    if (grad_star) *grad_star = bind_star.scores.grad();
  }
  return loss.value()(0, 0);
}

EdgeSensitivity edge_sensitivity_scores(const ModelParams& params, const Graph& g, const Graph& g_star,
                                        std::span<const EdgeEdit> edits, const EditTrainConfig& config) {
  EdgeList expected = g.edges();
  for (const auto& e : edits) {
    auto it = std::lower_bound(expected.begin(), expected.end(), e.edge);
    const bool present = it != expected.end() && *it == e.edge;
    if (e.kind == EditKind::Add && !present) {
      expected.insert(it, e.edge);
    } else if (e.kind == EditKind::Delete && present) {
      expected.erase(it);
    } else {
      throw EditError("edge_sensitivity_scores: edit " + to_string(e) + " is inconsistent with the graph");
    }
  }
  if (expected != g_star.edges()) {
    throw EditError("edge_sensitivity_scores: edits do not transform g into g_star");
  }

  const double s0 = std::log(config.mask_init / (1.0 - config.mask_init));
  ScoreMatrix mask_g(g.edges(), s0);
  ScoreMatrix mask_star(g_star.edges(), s0);
  Eigen::VectorXd grad_g, grad_star;
  EdgeSensitivity out;
  for (int it = 0; it < config.mask_iters; ++it) {
    out.loss = mask_loss(params, g, mask_g, g_star, mask_star, config.binarize_threshold, &grad_g, &grad_star);
    if (it + 1 < config.mask_iters) {
      mask_g.scores += config.mask_lr * grad_g;
      mask_star.scores += config.mask_lr * grad_star;
    }
  }
  for (const auto& e : edits) {
    const auto& mask = e.kind == EditKind::Add ? mask_star : mask_g;
    const auto& grad = e.kind == EditKind::Add ? grad_star : grad_g;
    const auto idx = mask.index_of(e.edge);
    out.importance[e] = idx ? std::abs(grad(static_cast<Eigen::Index>(*idx))) : 0.0;
  }
  return out;
}

EdgeEdit select_edit(const std::map<EdgeEdit, double>& importance) {
  if (importance.empty()) throw std::invalid_argument("select_edit: no candidate edits");
  auto best = importance.begin();
  for (auto it = std::next(best); it != importance.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

TrainResult train_standard(ModelParams params, Graph g, Optimizer& optimizer, int epochs) {
  for (int k = 1; k <= epochs; ++k) train_step(params, g, optimizer);
  return {std::move(params), std::move(g), {}};
}

TrainResult train_bruteforce(ModelParams params, Graph g, Optimizer& optimizer, const EditTrainConfig& config) {
  config.check();
  const bool sampled = g.num_nodes() > config.candidate_cap;
  if (config.alpha > 0 && sampled && !config.sample_cap) {
    throw CandidateLimitError("brute-force editing refuses exhaustive enumeration on " +
                              std::to_string(g.num_nodes()) + " nodes (cap " + std::to_string(config.candidate_cap) +
                              "); supply a candidate sample cap");
  }
  EditTrace trace;
  std::mt19937_64 rng(config.seed);
  for (int k = 1; k <= config.epochs; ++k) {
    train_step(params, g, optimizer);
    if (k > config.alpha) continue;
    auto candidates = candidate_edits(g, Exhaustive{});
    if (sampled && candidates.size() > *config.sample_cap) {
      std::vector<EdgeEdit> picked;
      std::sample(candidates.begin(), candidates.end(), std::back_inserter(picked),
                  static_cast<std::ptrdiff_t>(*config.sample_cap), rng);
      candidates = std::move(picked);
    }
    if (candidates.empty()) {
      trace.entries.push_back({k, std::nullopt, 0.0});
      continue;
    }
    const auto best = brute_force_select(params, g, candidates, eval_mask(g, config.eval_nodes));
    g = apply_edit(g, best.edit);
    trace.entries.push_back({k, best.edit, best.score});
  }
  return {std::move(params), std::move(g), std::move(trace)};
}

TrainResult train_fairedit(ModelParams params, Graph g, Optimizer& optimizer, const EditTrainConfig& config) {
  config.check();
  EditTrace trace;
  for (int k = 1; k <= config.epochs; ++k) {
    train_step(params, g, optimizer);
    if (k > config.alpha) continue;
    const auto cf = generate_counterfactual_graph(g, config.rho, config.gamma, mix(config.seed, static_cast<std::uint64_t>(k)));
    if (cf.edits.empty()) {
      trace.entries.push_back({k, std::nullopt, 0.0});
      continue;
    }
    const auto sens = edge_sensitivity_scores(params, g, cf.graph, cf.edits, config);
    const auto chosen = select_edit(sens.importance);
    g = apply_edit(g, chosen);
    trace.entries.push_back({k, chosen, sens.importance.at(chosen)});
  }
  return {std::move(params), std::move(g), std::move(trace)};
}

}  // namespace fairedit
