#include "fairedit/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fairedit {

namespace {

thread_local std::size_t g_forward_calls = 0;

Tensor aggregate(const NormalizedAdjacency& op, const MaskBinding* mask, const Tensor& h) {
  if (mask) return ad::masked_spmm(op, *mask->matrix, mask->scores, h);
  return ad::spmm(op, h);
}

Tensor dense_layer(const std::vector<Tensor>& bound, int layer, const Tensor& h) {
  const auto& w = bound[static_cast<std::size_t>(2 * layer)];
  const auto& b = bound[static_cast<std::size_t>(2 * layer + 1)];
  return ad::add_row(ad::matmul(h, w), b);
}

void require(const ModelParams& params, Architecture a, const Tensor& features) {
  if (params.architecture != a) {
    throw std::invalid_argument(std::string("forward: parameters are for ") + to_string(params.architecture) +
                                ", called " + to_string(a));
  }
  params.check(features.cols());
}

}  // namespace

const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::GCN: return "gcn";
    case Architecture::SAGE: return "sage";
    case Architecture::APPNP: return "appnp";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "gcn" || name == "GCN") return Architecture::GCN;
  if (name == "sage" || name == "SAGE") return Architecture::SAGE;
  if (name == "appnp" || name == "APPNP") return Architecture::APPNP;
  throw std::invalid_argument("unknown model '" + name + "'");
}

void ModelParams::check(Eigen::Index in_features) const {
  if (tensors.empty() || tensors.size() % 2 != 0) throw ad::ShapeError("model has no complete layers");
  Eigen::Index width = in_features;
  for (int l = 0; l < depth(); ++l) {
    const auto fan_in = architecture == Architecture::SAGE ? 2 * width : width;
    if (weight(l).rows() != fan_in) {
      throw ad::ShapeError("layer " + std::to_string(l) + " expects " + std::to_string(weight(l).rows()) +
                           " inputs, got " + std::to_string(fan_in));
    }
    if (bias(l).rows() != 1 || bias(l).cols() != weight(l).cols()) {
      throw ad::ShapeError("layer " + std::to_string(l) + " bias shape mismatch");
    }
    width = weight(l).cols();
  }
  if (width != 1) throw ad::ShapeError("final layer must emit one logit");
  if (architecture == Architecture::APPNP) {
    if (!(teleport > 0.0 && teleport <= 1.0)) throw std::invalid_argument("APPNP teleport must lie in (0,1]");
    if (power_iters < 0) throw std::invalid_argument("APPNP power iterations must be non-negative");
  }
}

ModelParams init_params(const ModelShape& shape, Eigen::Index in_features, std::uint64_t seed) {
  if (shape.depth < 1 || shape.hidden < 1) throw std::invalid_argument("model depth and hidden size must be positive");
  ModelParams p;
  p.architecture = shape.architecture;
  p.teleport = shape.teleport;
  p.power_iters = shape.power_iters;
  std::mt19937_64 rng(seed);
  Eigen::Index width = in_features;
  for (int l = 0; l < shape.depth; ++l) {
    const Eigen::Index out = l + 1 == shape.depth ? 1 : shape.hidden;
    const Eigen::Index fan_in = shape.architecture == Architecture::SAGE ? 2 * width : width;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixXd w(fan_in, out);
    for (Eigen::Index j = 0; j < out; ++j) {
      for (Eigen::Index i = 0; i < fan_in; ++i) w(i, j) = dist(rng);
    }
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(MatrixXd::Zero(1, out));
    width = out;
  }
  p.check(in_features);
  return p;
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const auto deg = g.degrees();
  NormalizedAdjacency op;
  op.n = g.num_nodes();
  op.entries.reserve(g.edges().size());
  for (const auto& e : g.edges()) {
    const double c = 1.0 / std::sqrt((deg[static_cast<std::size_t>(e.u)] + 1.0) *
                                     (deg[static_cast<std::size_t>(e.v)] + 1.0));
    op.entries.push_back({e, c, c});
  }
  op.diagonal.resize(deg.size());
  for (std::size_t i = 0; i < deg.size(); ++i) op.diagonal[i] = 1.0 / (deg[i] + 1.0);
  return op;
}

NormalizedAdjacency mean_adjacency(const Graph& g) {
  const auto deg = g.degrees();
  NormalizedAdjacency op;
  op.n = g.num_nodes();
  op.entries.reserve(g.edges().size());
  for (const auto& e : g.edges()) {
    op.entries.push_back({e, 1.0 / deg[static_cast<std::size_t>(e.u)], 1.0 / deg[static_cast<std::size_t>(e.v)]});
  }
  return op;
}

NormalizedAdjacency propagation_operator(Architecture a, const Graph& g) {
  return a == Architecture::SAGE ? mean_adjacency(g) : normalize_adjacency(g);
}

std::vector<Tensor> bind(Tape& tape, const ModelParams& params, bool trainable) {
  std::vector<Tensor> out;
  out.reserve(params.tensors.size());
  for (const auto& t : params.tensors) out.push_back(trainable ? tape.variable(t) : tape.constant(t));
  return out;
}

Tensor gcn_forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
                   const NormalizedAdjacency& op, const MaskBinding* mask) {
  require(params, Architecture::GCN, features);
  ++g_forward_calls;
  Tensor h = features;
  for (int l = 0; l < params.depth(); ++l) {
    const auto& w = bound[static_cast<std::size_t>(2 * l)];
    const auto& b = bound[static_cast<std::size_t>(2 * l + 1)];
    // A (H W) == (A H) W; projecting first keeps the sparse pass narrow.
    h = ad::add_row(aggregate(op, mask, ad::matmul(h, w)), b);
    if (l + 1 < params.depth()) h = ad::relu(h);
  }
  return h;
}

Tensor sage_forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
                    const NormalizedAdjacency& op, const MaskBinding* mask) {
  require(params, Architecture::SAGE, features);
  ++g_forward_calls;
  Tensor h = features;
  for (int l = 0; l < params.depth(); ++l) {
    h = dense_layer(bound, l, ad::concat_cols(h, aggregate(op, mask, h)));
    if (l + 1 < params.depth()) h = ad::relu(h);
  }
  return h;
}

Tensor appnp_forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
                     const NormalizedAdjacency& op, const MaskBinding* mask) {
  require(params, Architecture::APPNP, features);
  ++g_forward_calls;
  Tensor h0 = features;
  for (int l = 0; l < params.depth(); ++l) {
    h0 = dense_layer(bound, l, h0);
    if (l + 1 < params.depth()) h0 = ad::relu(h0);
  }
  if (params.teleport == 1.0) return h0;
  const Tensor restart = ad::scale(h0, params.teleport);
  Tensor z = h0;
  for (int t = 0; t < params.power_iters; ++t) {
    z = ad::add(ad::scale(aggregate(op, mask, z), 1.0 - params.teleport), restart);
  }
  return z;
}

Tensor forward(const ModelParams& params, const std::vector<Tensor>& bound, const Tensor& features,
               const NormalizedAdjacency& op, const MaskBinding* mask) {
  switch (params.architecture) {
    case Architecture::GCN: return gcn_forward(params, bound, features, op, mask);
    case Architecture::SAGE: return sage_forward(params, bound, features, op, mask);
    case Architecture::APPNP: return appnp_forward(params, bound, features, op, mask);
  }
  throw std::logic_error("unreachable architecture");
}

MatrixXd logits(const ModelParams& params, const MatrixXd& features, const NormalizedAdjacency& op) {
  Tape tape;
  auto bound = bind(tape, params, false);
  return forward(params, bound, tape.constant(features), op).value();
}

MatrixXd logits(const ModelParams& params, const Graph& g) {
  return logits(params, g.features(), propagation_operator(params.architecture, g));
}

std::vector<int> predict(const MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = logits(i, 0) > 0.0 ? 1 : 0;
  return out;
}

double train_step(ModelParams& params, const Graph& g, Optimizer& optimizer) {
  const auto& train = g.train_mask();
  if (std::find(train.begin(), train.end(), 1) == train.end()) {
    throw std::invalid_argument("train_step: empty training mask");
  }
  Tape tape;
  auto bound = bind(tape, params, true);
  const auto op = propagation_operator(params.architecture, g);
  const Tensor out = forward(params, bound, tape.constant(g.features()), op);
  const Tensor loss = ad::bce_with_logits(out, std::span<const int>(g.labels()), std::span<const std::uint8_t>(train));
  tape.backward(loss);
  std::vector<MatrixXd> grads;
  grads.reserve(bound.size());
  for (const auto& t : bound) grads.push_back(t.grad());
  const double value = loss.value()(0, 0);
  optimizer.step(params.tensors, grads);
  return value;
}

std::size_t forward_count() { return g_forward_calls; }
void reset_forward_count() { g_forward_calls = 0; }

}  // namespace fairedit
