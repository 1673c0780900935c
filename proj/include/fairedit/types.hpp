#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fairedit {

using NodeId = std::int32_t;
using MatrixXd = Eigen::MatrixXd;

/// Undirected edge, stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  static Edge make(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  auto operator<=>(const Edge&) const = default;
};

using EdgeList = std::vector<Edge>;

/// Thrown for malformed or out-of-contract input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairedit
