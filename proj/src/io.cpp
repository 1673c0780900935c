#include "fairedit/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace fairedit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw DataError("non-numeric cell '" + cell + "' at row " + std::to_string(row) + ", column '" +
                    column + "'");
  }
  return value;
}

int as_binary(double v, std::size_t row, const std::string& column) {
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw DataError("non-binary value " + std::to_string(v) + " at row " + std::to_string(row) +
                  ", column '" + column + "'");
}

}  // namespace

NodeTable parse_node_table(std::istream& in, const std::string& sensitive_col,
                           const std::string& label_col) {
  std::string header;
  while (std::getline(in, header) && trim(header).empty()) {
  }
  if (trim(header).empty()) throw DataError("node table has no header row");
  const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
  const auto names = split_line(header, delim);

  auto find = [&](const std::string& name) -> std::size_t {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError("node table has no column '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  const auto sens_idx = find(sensitive_col);
  const auto label_idx = find(label_col);
  if (sens_idx == label_idx) throw DataError("sensitive and label columns must differ");

  NodeTable table;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c == label_idx) continue;
    if (c == sens_idx) table.sensitive_column = static_cast<int>(table.feature_names.size());
    table.feature_names.push_back(names[c]);
  }

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split_line(line, delim);
    if (cells.size() != names.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(names.size()));
    }
    std::vector<double> values;
    values.reserve(cells.size() - 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], row, names[c]);
      if (c == label_idx) {
        table.labels.push_back(as_binary(v, row, names[c]));
        continue;
      }
      if (c == sens_idx) table.sensitive.push_back(as_binary(v, row, names[c]));
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }

  const auto d = static_cast<Eigen::Index>(table.feature_names.size());
  table.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      table.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
  }
  return table;
}

NodeTable load_node_table(const std::filesystem::path& path, const std::string& sensitive_col,
                          const std::string& label_col) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open node table " + path.string());
  return parse_node_table(in, sensitive_col, label_col);
}

EdgeList parse_edge_list(std::istream& in, NodeId n) {
  EdgeList edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ss(t);
    long long a = 0, b = 0;
    std::string rest;
    if (!(ss >> a >> b) || (ss >> rest)) {
      throw DataError("malformed edge line " + std::to_string(lineno) + ": '" + t + "'");
    }
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw DataError("edge line " + std::to_string(lineno) + " has node id out of range [0," +
                      std::to_string(n) + ")");
    }
    if (a == b) throw DataError("edge line " + std::to_string(lineno) + " is a self-loop");
    edges.push_back(Edge::make(static_cast<NodeId>(a), static_cast<NodeId>(b)));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

EdgeList load_edge_list(const std::filesystem::path& path, NodeId n) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  return parse_edge_list(in, n);
}

void write_edge_list(std::ostream& out, const EdgeList& edges) {
  for (const auto& e : edges) out << e.u << ' ' << e.v << '\n';
}

MatrixXd normalize_features(const MatrixXd& features, const Mask& train_mask, int sensitive_column) {
  if (train_mask.size() != static_cast<std::size_t>(features.rows())) {
    throw std::invalid_argument("normalize_features: mask length differs from row count");
  }
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < train_mask.size(); ++i) {
    if (train_mask[i]) rows.push_back(static_cast<Eigen::Index>(i));
  }
  if (rows.size() < 2) throw std::invalid_argument("normalize_features: need at least two training rows");

  MatrixXd out = features;
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    if (j == sensitive_column) continue;
    double mean = 0;
    for (auto r : rows) mean += features(r, j);
    mean /= static_cast<double>(rows.size());
    double var = 0;
    for (auto r : rows) var += (features(r, j) - mean) * (features(r, j) - mean);
    const double sd = std::sqrt(var / static_cast<double>(rows.size()));
    if (sd == 0.0) {
      out.col(j).setZero();
    } else {
      out.col(j) = ((features.col(j).array() - mean) / sd).matrix();
    }
  }
  return out;
}

Splits split(NodeId n, std::array<double, 3> fractions, const std::vector<int>& labels,
             const Mask& label_known, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0)) throw std::invalid_argument("split: fractions must be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }
  const auto un = static_cast<std::size_t>(n);
  if (labels.size() != un || label_known.size() != un) {
    throw std::invalid_argument("split: label vectors must have length n");
  }

  std::array<std::vector<NodeId>, 2> by_class;
  for (NodeId i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (label_known[k]) by_class[static_cast<std::size_t>(labels[k])].push_back(i);
  }
  std::mt19937_64 rng(seed);
  // Rank every labeled node by its relative position inside its shuffled
  // class; cutting that ordering yields class-proportional splits.
  struct Keyed {
    double key;
    int cls;
    NodeId node;
  };
  std::vector<Keyed> order;
  for (int c = 0; c < 2; ++c) {
    auto& members = by_class[static_cast<std::size_t>(c)];
    if (members.size() < 3) {
      throw std::invalid_argument("split: label class " + std::to_string(c) + " has " +
                                  std::to_string(members.size()) + " nodes, fewer than three splits");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      order.push_back({(static_cast<double>(k) + 0.5) / static_cast<double>(members.size()), c, members[k]});
    }
  }
  std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });

  const auto total = order.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(total)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(total)));
  Splits s{Mask(un, false), Mask(un, false), Mask(un, false)};
  for (std::size_t k = 0; k < total; ++k) {
    const auto node = static_cast<std::size_t>(order[k].node);
    if (k < n_train) {
      s.train[node] = true;
    } else if (k < n_train + n_val) {
      s.val[node] = true;
    } else {
      s.test[node] = true;
    }
  }
  return s;
}

Graph build_graph(NodeTable table, EdgeList edges, std::array<double, 3> fractions, std::uint64_t seed) {
  const auto n = static_cast<NodeId>(table.features.rows());
  auto nd = std::make_shared<NodeData>();
  nd->sensitive = std::move(table.sensitive);
  nd->labels = std::move(table.labels);
  nd->label_known = Mask(static_cast<std::size_t>(n), true);
  nd->sensitive_column = table.sensitive_column;
  auto s = split(n, fractions, nd->labels, nd->label_known, seed);
  nd->features = normalize_features(table.features, s.train, table.sensitive_column);
  nd->train = std::move(s.train);
  nd->val = std::move(s.val);
  nd->test = std::move(s.test);
  Graph g(std::move(nd), std::move(edges));
  if (auto err = validate(g); !err.empty()) throw DataError("invalid graph: " + err);
  return g;
}

}  // namespace fairedit
