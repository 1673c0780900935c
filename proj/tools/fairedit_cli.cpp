// fairedit: train GNN node classifiers with optional fairness-driven graph
// editing and emit fairness reports.

#include "fairedit/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kDataError = 2, kRefused = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware GNN training with graph editing"};
  std::string nodes, edges, synthetic, model, method, config_path, seeds, out, format, sensitive_col, label_col;
  long long candidate_cap = -1;
  long long sample_cap = -1;
  std::vector<std::string> settings;

  auto* nodes_opt = app.add_option("--nodes", nodes, "Node table (csv/tsv with header)");
  auto* edges_opt = app.add_option("--edges", edges, "Edge list, one 'u v' pair per line");
  auto* synth_opt = app.add_option("--synthetic", synthetic,
                                   "Synthetic biased graph, e.g. n=400,homophily=0.9,label_bias=0.8,density=8,seed=1");
  nodes_opt->needs(edges_opt);
  edges_opt->needs(nodes_opt);
  synth_opt->excludes(nodes_opt)->excludes(edges_opt);
  app.add_option("--model", model, "gcn | sage | appnp");
  app.add_option("--method", method, "standard | bruteforce | fairedit");
  app.add_option("--config", config_path, "Flat key = value config file");
  app.add_option("--seed", seeds, "Comma-separated run seeds");
  app.add_option("--out", out, "Report output path (stdout when omitted)");
  app.add_option("--candidate-cap", candidate_cap, "Largest graph for exhaustive brute-force enumeration");
  app.add_option("--sample-cap", sample_cap, "Candidate edits sampled per epoch above the cap");
  app.add_option("--format", format, "rows | structured");
  app.add_option("--sensitive-col", sensitive_col, "Sensitive attribute column of the node table");
  app.add_option("--label-col", label_col, "Label column of the node table");
  app.add_option("--set", settings, "Extra key=value config override (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  std::vector<std::pair<std::string, std::string>> overrides;
  auto flag = [&](const char* key, const std::string& value) {
    if (!value.empty()) overrides.emplace_back(key, value);
  };
  for (const auto& s : settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value, got '" << s << "'\n";
      return kConfigError;
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  flag("nodes", nodes);
  flag("edges", edges);
  flag("synthetic", synthetic);
  flag("model", model);
  flag("method", method);
  flag("seeds", seeds);
  flag("out", out);
  flag("format", format);
  flag("sensitive_col", sensitive_col);
  flag("label_col", label_col);
  if (candidate_cap >= 0) overrides.emplace_back("candidate_cap", std::to_string(candidate_cap));
  if (sample_cap >= 0) overrides.emplace_back("sample_cap", std::to_string(sample_cap));

  fairedit::ExperimentConfig config;
  try {
    if (config_path.empty()) {
      config = fairedit::parse_config(overrides);
    } else {
      std::ifstream file(config_path);
      if (!file) {
        std::cerr << "error: cannot open config " << config_path << '\n';
        return kConfigError;
      }
      config = fairedit::parse_config(file, overrides);
    }
  } catch (const fairedit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const auto result = fairedit::run_experiment(config);
    if (config.output) {
      fairedit::emit_report(result, *config.output, config.format);
    } else {
      fairedit::emit_report(result, std::cout, config.format);
    }
  } catch (const fairedit::CandidateLimitError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return kRefused;
  } catch (const fairedit::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fairedit::UndefinedMetricError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fairedit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
