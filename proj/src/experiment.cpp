#include "fairedit/experiment.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace fairedit {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char delim = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, delim)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("setting '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("setting '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
  const auto x = to_int(key, v);
  if (x < 0) throw ConfigError("setting '" + key + "': seeds must be non-negative");
  return static_cast<std::uint64_t>(x);
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F convert) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(static_cast<T>(convert(key, item)));
  if (out.empty()) throw ConfigError("setting '" + key + "': empty list");
  return out;
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

// Distinct graph per run seed for synthetic datasets.
std::uint64_t run_graph_seed(std::uint64_t base, std::uint64_t seed) { return base * 1000003ULL + seed; }

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::Standard: return "standard";
    case Method::BruteForce: return "bruteforce";
    case Method::FairEdit: return "fairedit";
  }
  return "?";
}

const char* to_string(ReportFormat f) { return f == ReportFormat::Rows ? "rows" : "structured"; }

std::string ExperimentConfig::dataset_name() const {
  if (!dataset.name.empty()) return dataset.name;
  if (dataset.synthetic) return "synthetic";
  if (dataset.nodes) return dataset.nodes->stem().string();
  return "unknown";
}

void ExperimentConfig::check() const {
  const bool files = dataset.nodes.has_value() || dataset.edges.has_value();
  if (files && dataset.synthetic) throw ConfigError("give either a node table and edge list or a synthetic spec, not both");
  if (!dataset.synthetic && !(dataset.nodes && dataset.edges)) {
    throw ConfigError("a dataset is required: both nodes and edges, or synthetic");
  }
  if (learning_rates.empty() || hidden_sizes.empty() || depths.empty()) throw ConfigError("grid axes must be non-empty");
  for (double lr : learning_rates) {
    if (!(lr > 0)) throw ConfigError("learning rates must be positive");
  }
  for (int h : hidden_sizes) {
    if (h < 1) throw ConfigError("hidden sizes must be positive");
  }
  for (int d : depths) {
    if (d < 1) throw ConfigError("depths must be positive");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(sigma >= 0)) throw ConfigError("sigma must be non-negative");
  if (!(teleport > 0 && teleport <= 1)) throw ConfigError("teleport must lie in (0,1]");
  if (power_iters < 0) throw ConfigError("power_iters must be non-negative");
  double total = 0;
  for (double f : split) {
    if (!(f > 0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  try {
    edit.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  for (const auto& item : split_list(text)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic spec item '" + item + "' is not key=value");
    const auto key = trim(item.substr(0, eq));
    const auto value = trim(item.substr(eq + 1));
    if (key == "n") spec.n = static_cast<NodeId>(to_int(key, value));
    else if (key == "groups") spec.groups = to_double(key, value);
    else if (key == "homophily") spec.homophily = to_double(key, value);
    else if (key == "density" || key == "edge_density") spec.edge_density = to_double(key, value);
    else if (key == "label_bias") spec.label_bias = to_double(key, value);
    else if (key == "seed") spec.seed = to_seed(key, value);
    else throw ConfigError("unknown synthetic spec key '" + key + "'");
  }
  return spec;
}

std::string format_synthetic_spec(const SyntheticSpec& s) {
  return "n=" + std::to_string(s.n) + ",groups=" + fmt_double(s.groups) + ",homophily=" + fmt_double(s.homophily) +
         ",density=" + fmt_double(s.edge_density) + ",label_bias=" + fmt_double(s.label_bias) +
         ",seed=" + std::to_string(s.seed);
}

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const auto v = trim(raw);
  auto& e = c.edit;
  if (key == "nodes") c.dataset.nodes = v;
  else if (key == "edges") c.dataset.edges = v;
  else if (key == "synthetic") c.dataset.synthetic = parse_synthetic_spec(v);
  else if (key == "dataset") c.dataset.name = v;
  else if (key == "sensitive_col") c.dataset.sensitive_col = v;
  else if (key == "label_col") c.dataset.label_col = v;
  else if (key == "model") {
    try {
      c.model = parse_architecture(v);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(err.what());
    }
  } else if (key == "method") {
    if (v == "standard" || v == "Standard") c.method = Method::Standard;
    else if (v == "bruteforce" || v == "BruteForce") c.method = Method::BruteForce;
    else if (v == "fairedit" || v == "FairEdit") c.method = Method::FairEdit;
    else throw ConfigError("unknown method '" + v + "'");
  } else if (key == "lr") c.learning_rates = to_list<double>(key, v, to_double);
  else if (key == "hidden") c.hidden_sizes = to_list<int>(key, v, to_int);
  else if (key == "depth") c.depths = to_list<int>(key, v, to_int);
  else if (key == "optimizer") {
    if (v == "adam") c.optimizer = ad::OptimizerKind::Adam;
    else if (v == "sgd") c.optimizer = ad::OptimizerKind::SGD;
    else throw ConfigError("unknown optimizer '" + v + "'");
  } else if (key == "teleport") c.teleport = to_double(key, v);
  else if (key == "power_iters") c.power_iters = static_cast<int>(to_int(key, v));
  else if (key == "K" || key == "epochs") e.epochs = static_cast<int>(to_int(key, v));
  else if (key == "alpha") e.alpha = static_cast<int>(to_int(key, v));
  else if (key == "rho") e.rho = to_double(key, v);
  else if (key == "gamma") e.gamma = to_double(key, v);
  else if (key == "mask_iters") e.mask_iters = static_cast<int>(to_int(key, v));
  else if (key == "mask_lr") e.mask_lr = to_double(key, v);
  else if (key == "mask_init") e.mask_init = to_double(key, v);
  else if (key == "binarize_threshold") e.binarize_threshold = to_double(key, v);
  else if (key == "eval_nodes") {
    if (v == "train") e.eval_nodes = EvalNodes::Train;
    else if (v == "val") e.eval_nodes = EvalNodes::Val;
    else throw ConfigError("eval_nodes must be train or val");
  } else if (key == "candidate_cap") e.candidate_cap = static_cast<NodeId>(to_int(key, v));
  else if (key == "sample_cap") {
    const auto x = to_int(key, v);
    if (x <= 0) throw ConfigError("sample_cap must be positive");
    e.sample_cap = static_cast<std::size_t>(x);
  } else if (key == "sigma") c.sigma = to_double(key, v);
  else if (key == "seeds" || key == "seed") c.seeds = to_list<std::uint64_t>(key, v, to_seed);
  else if (key == "split") {
    const auto xs = to_list<double>(key, v, to_double);
    if (xs.size() != 3) throw ConfigError("split needs three fractions");
    c.split = {xs[0], xs[1], xs[2]};
  } else if (key == "out") c.output = v;
  else if (key == "format") {
    if (v == "rows") c.format = ReportFormat::Rows;
    else if (v == "structured") c.format = ReportFormat::Structured;
    else throw ConfigError("format must be rows or structured");
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& file, const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(file, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
    apply_setting(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  for (const auto& [k, v] : overrides) apply_setting(c, k, v);
  c.check();
  return c;
}

ExperimentConfig parse_config(const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::istringstream empty;
  return parse_config(empty, overrides);
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("dataset", c.dataset_name());
  if (c.dataset.synthetic) out.emplace_back("synthetic", format_synthetic_spec(*c.dataset.synthetic));
  if (c.dataset.nodes) out.emplace_back("nodes", c.dataset.nodes->string());
  if (c.dataset.edges) out.emplace_back("edges", c.dataset.edges->string());
  if (!c.dataset.synthetic) {
    out.emplace_back("sensitive_col", c.dataset.sensitive_col);
    out.emplace_back("label_col", c.dataset.label_col);
  }
  out.emplace_back("model", to_string(c.model));
  out.emplace_back("method", to_string(c.method));
  out.emplace_back("lr", join(c.learning_rates));
  out.emplace_back("hidden", join(c.hidden_sizes));
  out.emplace_back("depth", join(c.depths));
  out.emplace_back("optimizer", c.optimizer == ad::OptimizerKind::Adam ? "adam" : "sgd");
  out.emplace_back("teleport", fmt_double(c.teleport));
  out.emplace_back("power_iters", std::to_string(c.power_iters));
  out.emplace_back("K", std::to_string(c.edit.epochs));
  out.emplace_back("alpha", std::to_string(c.edit.alpha));
  out.emplace_back("rho", fmt_double(c.edit.rho));
  out.emplace_back("gamma", fmt_double(c.edit.gamma));
  out.emplace_back("mask_iters", std::to_string(c.edit.mask_iters));
  out.emplace_back("mask_lr", fmt_double(c.edit.mask_lr));
  out.emplace_back("mask_init", fmt_double(c.edit.mask_init));
  out.emplace_back("binarize_threshold", fmt_double(c.edit.binarize_threshold));
  out.emplace_back("eval_nodes", c.edit.eval_nodes == EvalNodes::Train ? "train" : "val");
  out.emplace_back("candidate_cap", std::to_string(c.edit.candidate_cap));
  if (c.edit.sample_cap) out.emplace_back("sample_cap", std::to_string(*c.edit.sample_cap));
  out.emplace_back("sigma", fmt_double(c.sigma));
  out.emplace_back("seeds", join(c.seeds));
  out.emplace_back("split", join(std::vector<double>(c.split.begin(), c.split.end())));
  out.emplace_back("format", to_string(c.format));
  return out;
}

Graph load_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.dataset.synthetic) {
    auto spec = *config.dataset.synthetic;
    spec.seed = run_graph_seed(spec.seed, seed);
    return synth_biased_graph(spec);
  }
  auto table = load_node_table(*config.dataset.nodes, config.dataset.sensitive_col, config.dataset.label_col);
  auto edges = load_edge_list(*config.dataset.edges, static_cast<NodeId>(table.features.rows()));
  try {
    return build_graph(std::move(table), std::move(edges), config.split, seed);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

TrainResult train_with_method(const ExperimentConfig& config, const GridPoint& point, const Graph& g,
                              std::uint64_t seed) {
  ModelShape shape{config.model, point.hidden, point.depth, config.teleport, config.power_iters};
  auto params = init_params(shape, g.num_features(), seed);
  Optimizer optimizer(config.optimizer, point.learning_rate);
  auto edit = config.edit;
  edit.seed = seed;
  switch (config.method) {
    case Method::Standard: return train_standard(std::move(params), g, optimizer, edit.epochs);
    case Method::BruteForce: return train_bruteforce(std::move(params), g, optimizer, edit);
    case Method::FairEdit: return train_fairedit(std::move(params), g, optimizer, edit);
  }
  throw std::logic_error("unreachable method");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.check();
  std::vector<Graph> graphs;
  graphs.reserve(config.seeds.size());
  for (auto seed : config.seeds) graphs.push_back(load_dataset(config, seed));

  std::vector<GridPoint> grid;
  for (double lr : config.learning_rates) {
    for (int h : config.hidden_sizes) {
      for (int d : config.depths) grid.push_back({lr, h, d});
    }
  }

  // Model selection uses validation F1 averaged over seeds; the first grid
  // point wins ties.
  std::size_t best = 0;
  double best_val = -1;
  std::vector<TrainResult> best_runs;
  std::vector<double> best_vals;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    std::vector<TrainResult> runs;
    std::vector<double> vals;
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
      auto run = train_with_method(config, grid[p], graphs[s], config.seeds[s]);
      const auto pred = predict(logits(run.params, run.graph));
      vals.push_back(f1_score(pred, run.graph.labels(), run.graph.val_mask()));
      runs.push_back(std::move(run));
    }
    const double v = mean_of(vals);
    if (v > best_val) {
      best_val = v;
      best = p;
      best_runs = std::move(runs);
      best_vals = std::move(vals);
    }
  }

  ExperimentResult result;
  result.config = config_echo(config);
  const auto dataset = config.dataset_name();
  std::array<std::vector<double>, 5> columns;
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    RunRecord r;
    r.dataset = dataset;
    r.model = to_string(config.model);
    r.method = to_string(config.method);
    r.seed = std::to_string(config.seeds[s]);
    r.grid = grid[best];
    r.val_f1 = best_vals[s];
    r.report = evaluate(best_runs[s].params, best_runs[s].graph, {config.sigma, config.seeds[s]});
    r.trace = best_runs[s].trace;
    const double m[5] = {r.report.f1, r.report.unfairness, r.report.instability, r.report.delta_sp,
                         r.report.delta_eo};
    for (std::size_t k = 0; k < 5; ++k) columns[k].push_back(m[k]);
    result.records.push_back(std::move(r));
  }
  for (const char* label : {"mean", "std"}) {
    RunRecord r;
    r.dataset = dataset;
    r.model = to_string(config.model);
    r.method = to_string(config.method);
    r.seed = label;
    r.grid = grid[best];
    const bool mean = std::string(label) == "mean";
    r.val_f1 = mean ? mean_of(best_vals) : std_of(best_vals);
    double* fields[5] = {&r.report.f1, &r.report.unfairness, &r.report.instability, &r.report.delta_sp,
                         &r.report.delta_eo};
    for (std::size_t k = 0; k < 5; ++k) *fields[k] = mean ? mean_of(columns[k]) : std_of(columns[k]);
    r.report.sigma = config.sigma;
    r.report.nodes = result.records.front().report.nodes;
    result.records.push_back(std::move(r));
  }
  return result;
}

const std::array<const char*, 5> kMetricColumns{"f1", "unfairness", "instability", "delta_sp", "delta_eo"};

void emit_report(const ExperimentResult& result, std::ostream& out, ReportFormat format) {
  if (result.records.empty()) throw std::invalid_argument("emit_report: no reports");
  if (format == ReportFormat::Rows) {
    out << "dataset,model,method,seed";
    for (const char* c : kMetricColumns) out << ',' << c;
    out << '\n';
    for (const auto& r : result.records) {
      char buf[160];
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f", r.report.f1, r.report.unfairness,
                    r.report.instability, r.report.delta_sp, r.report.delta_eo);
      out << r.dataset << ',' << r.model << ',' << r.method << ',' << r.seed << buf << '\n';
    }
    return;
  }
  json doc;
  json cfg = json::object();
  for (const auto& [k, v] : result.config) cfg[k] = v;
  doc["config"] = cfg;
  doc["runs"] = json::array();
  for (const auto& r : result.records) {
    json run;
    run["dataset"] = r.dataset;
    run["model"] = r.model;
    run["method"] = r.method;
    run["seed"] = r.seed;
    run["grid"] = {{"lr", r.grid.learning_rate}, {"hidden", r.grid.hidden}, {"depth", r.grid.depth}};
    run["val_f1"] = r.val_f1;
    run["metrics"] = {{"f1", r.report.f1},
                      {"unfairness", r.report.unfairness},
                      {"instability", r.report.instability},
                      {"delta_sp", r.report.delta_sp},
                      {"delta_eo", r.report.delta_eo}};
    run["metadata"] = {{"eval_seed", r.report.seed},
                       {"sigma", r.report.sigma},
                       {"node_set", r.report.node_set},
                       {"nodes", r.report.nodes}};
    json trace = json::array();
    for (const auto& e : r.trace.entries) {
      json entry = {{"epoch", e.epoch}, {"score", e.score}};
      if (e.edit) {
        entry["kind"] = to_string(e.edit->kind);
        entry["u"] = e.edit->edge.u;
        entry["v"] = e.edit->edge.v;
      } else {
        entry["kind"] = "none";
      }
      trace.push_back(std::move(entry));
    }
    run["trace"] = std::move(trace);
    doc["runs"].push_back(std::move(run));
  }
  out << doc.dump(2) << '\n';
}

void emit_report(const ExperimentResult& result, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report to " + path.string());
  emit_report(result, out, format);
  if (!out) throw DataError("failed writing report to " + path.string());
}

ExperimentResult parse_structured_report(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed structured report: ") + e.what());
  }
  ExperimentResult result;
  for (const auto& [k, v] : doc.at("config").items()) result.config.emplace_back(k, v.get<std::string>());
  for (const auto& run : doc.at("runs")) {
    RunRecord r;
    r.dataset = run.at("dataset").get<std::string>();
    r.model = run.at("model").get<std::string>();
    r.method = run.at("method").get<std::string>();
    r.seed = run.at("seed").get<std::string>();
    r.grid = {run.at("grid").at("lr").get<double>(), run.at("grid").at("hidden").get<int>(),
              run.at("grid").at("depth").get<int>()};
    r.val_f1 = run.at("val_f1").get<double>();
    const auto& m = run.at("metrics");
    r.report.f1 = m.at("f1").get<double>();
    r.report.unfairness = m.at("unfairness").get<double>();
    r.report.instability = m.at("instability").get<double>();
    r.report.delta_sp = m.at("delta_sp").get<double>();
    r.report.delta_eo = m.at("delta_eo").get<double>();
    const auto& md = run.at("metadata");
    r.report.seed = md.at("eval_seed").get<std::uint64_t>();
    r.report.sigma = md.at("sigma").get<double>();
    r.report.node_set = md.at("node_set").get<std::string>();
    r.report.nodes = md.at("nodes").get<std::size_t>();
    for (const auto& e : run.at("trace")) {
      TraceEntry t;
      t.epoch = e.at("epoch").get<int>();
      t.score = e.at("score").get<double>();
      const auto kind = e.at("kind").get<std::string>();
      if (kind != "none") {
        t.edit = EdgeEdit{kind == "add" ? EditKind::Add : EditKind::Delete,
                          Edge::make(e.at("u").get<NodeId>(), e.at("v").get<NodeId>())};
      }
      r.trace.entries.push_back(t);
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

}  // namespace fairedit
