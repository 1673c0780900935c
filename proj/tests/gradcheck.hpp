// Finite-difference gradient checks for every differentiable tape operation,
// shared by the unit tests and the acceptance suite.

#pragma once

#include "fairedit/autodiff.hpp"
#include "fairedit/propagation.hpp"
#include "oracles.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fairedit::gradcheck {

using ad::Tensor;
using Tape = ad::Tape<double>;
using Builder = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct Result {
  std::string op;
  double worst = 0;  // largest relative error seen
  int instances = 0;
};

/// Analytic vs central-difference gradient of sum(R .* f(inputs)) for each
/// input, with R a fixed random weighting. Returns the worst relative error.
inline double check(const Builder& f, const std::vector<MatrixXd>& inputs, std::uint64_t seed, double step = 1e-4) {
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd weights;
  auto scalar = [&](const std::vector<MatrixXd>& xs, std::vector<MatrixXd>* grads) {
    Tape tape;
    std::vector<Tensor<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.variable(x));
    auto out = f(vars);
    if (weights.size() == 0) {
      weights.resize(out.rows(), out.cols());
      for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = normal(rng);
    }
    auto loss = ad::sum(ad::mul(out, tape.constant(weights)));
    if (grads) {
      tape.backward(loss);
      for (const auto& v : vars) grads->push_back(v.grad());
    }
    return loss.value()(0, 0);
  };
  std::vector<MatrixXd> analytic;
  scalar(inputs, &analytic);
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto fd = oracle::finite_difference(
        [&](const MatrixXd& xk) {
          auto xs = inputs;
          xs[k] = xk;
          return scalar(xs, nullptr);
        },
        inputs[k], step);
    worst = std::max(worst, oracle::relative_error(analytic[k], fd));
  }
  return worst;
}

inline MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double margin = 0.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double x = normal(rng);
    // Keep kinks (relu at 0, |.| at 0) farther than `margin` from any sample.
    if (std::abs(x) < margin) x = x < 0 ? x - margin : x + margin;
    m.data()[i] = x;
  }
  return m;
}

/// Random operator over a random edge set of an n-node graph.
inline ad::EdgeOperator<double> random_operator(NodeId n, std::mt19937_64& rng, bool with_diagonal) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ad::EdgeOperator<double> op;
  op.n = n;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (unit(rng) < 0.4) op.entries.push_back({{u, v}, 0.1 + unit(rng), 0.1 + unit(rng)});
    }
  }
  if (with_diagonal) {
    for (NodeId i = 0; i < n; ++i) op.diagonal.push_back(0.1 + unit(rng));
  }
  return op;
}

/// Runs every operation over `instances` seeded random inputs.
inline std::vector<Result> run_all(int instances = 20) {
  std::vector<Result> results;
  auto run = [&](const std::string& name, auto make) {
    Result r{name, 0, 0};
    for (int s = 0; s < instances; ++s) {
      std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(s));
      auto [builder, inputs] = make(rng);
      r.worst = std::max(r.worst, check(builder, inputs, static_cast<std::uint64_t>(s)));
      ++r.instances;
    }
    results.push_back(r);
  };
  using In = std::vector<MatrixXd>;
  using Vars = std::vector<Tensor<double>>;

  run("matmul", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::matmul(v[0], v[1]); }),
                     In{random_matrix(4, 3, rng), random_matrix(3, 5, rng)}};
  });
  run("add", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::add(v[0], v[1]); }),
                     In{random_matrix(3, 4, rng), random_matrix(3, 4, rng)}};
  });
  run("sub", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::sub(v[0], v[1]); }),
                     In{random_matrix(3, 4, rng), random_matrix(3, 4, rng)}};
  });
  run("mul", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::mul(v[0], v[1]); }),
                     In{random_matrix(3, 4, rng), random_matrix(3, 4, rng)}};
  });
  run("scale", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::scale(v[0], -0.7); }), In{random_matrix(3, 2, rng)}};
  });
  run("add_row", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::add_row(v[0], v[1]); }),
                     In{random_matrix(5, 3, rng), random_matrix(1, 3, rng)}};
  });
  run("concat_cols", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::concat_cols(v[0], v[1]); }),
                     In{random_matrix(4, 2, rng), random_matrix(4, 3, rng)}};
  });
  run("row_mean", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::row_mean(v[0]); }), In{random_matrix(4, 3, rng)}};
  });
  run("sum", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::sum(v[0]); }), In{random_matrix(4, 3, rng)}};
  });
  run("relu", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::relu(v[0]); }), In{random_matrix(4, 3, rng, 1e-2)}};
  });
  run("sigmoid", [](std::mt19937_64& rng) {
    return std::pair{Builder([](const Vars& v) { return ad::sigmoid(v[0]); }), In{random_matrix(4, 3, rng)}};
  });
  run("l1_diff", [](std::mt19937_64& rng) {
    MatrixXd a = random_matrix(4, 3, rng);
    MatrixXd b = a + random_matrix(4, 3, rng, 1e-2);
    return std::pair{Builder([](const Vars& v) { return ad::l1_diff(v[0], v[1]); }), In{a, b}};
  });
  run("bce_with_logits", [](std::mt19937_64& rng) {
    std::uniform_int_distribution<int> bit(0, 1);
    auto targets = std::make_shared<std::vector<int>>(6);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(6);
    for (int i = 0; i < 6; ++i) {
      (*targets)[static_cast<std::size_t>(i)] = bit(rng);
      (*mask)[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i == 0 ? 1 : bit(rng));
    }
    MatrixXd z = 3.0 * random_matrix(6, 1, rng);
    return std::pair{Builder([targets, mask](const Vars& v) {
                       return ad::bce_with_logits(v[0], std::span<const int>(*targets),
                                                  std::span<const std::uint8_t>(*mask));
                     }),
                     In{z}};
  });
  run("spmm", [](std::mt19937_64& rng) {
    auto op = std::make_shared<ad::EdgeOperator<double>>(random_operator(6, rng, true));
    return std::pair{Builder([op](const Vars& v) { return ad::spmm(*op, v[0]); }), In{random_matrix(6, 3, rng)}};
  });
  run("masked_spmm", [](std::mt19937_64& rng) {
    auto op = std::make_shared<ad::EdgeOperator<double>>(random_operator(6, rng, true));
    EdgeList host;
    for (const auto& e : op->entries) host.push_back(e.edge);
    auto mask = std::make_shared<ad::ScoreMatrix<double>>(host, 0.0);
    MatrixXd scores = random_matrix(static_cast<Eigen::Index>(host.size()), 1, rng);
    return std::pair{Builder([op, mask](const Vars& v) { return ad::masked_spmm(*op, *mask, v[1], v[0]); }),
                     In{random_matrix(6, 3, rng), scores}};
  });
  return results;
}

}  // namespace fairedit::gradcheck
