// Experiment configuration, grid search runner and report serialization.

#pragma once

#include "fairedit/edit.hpp"
#include "fairedit/graph.hpp"
#include "fairedit/metrics.hpp"
#include "fairedit/models.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairedit {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Method { Standard, BruteForce, FairEdit };
enum class ReportFormat { Rows, Structured };

const char* to_string(Method m);
const char* to_string(ReportFormat f);

struct DatasetSource {
  std::optional<std::filesystem::path> nodes;
  std::optional<std::filesystem::path> edges;
  std::string sensitive_col = "sensitive";
  std::string label_col = "label";
  std::optional<SyntheticSpec> synthetic;
  std::string name;  // label used in reports; derived when empty
};

struct ExperimentConfig {
  DatasetSource dataset;
  Architecture model = Architecture::GCN;
  Method method = Method::Standard;
  std::vector<double> learning_rates{1e-3, 1e-4, 1e-5};
  std::vector<int> hidden_sizes{16, 32};
  std::vector<int> depths{2, 3};
  ad::OptimizerKind optimizer = ad::OptimizerKind::Adam;
  double teleport = 0.1;
  int power_iters = 10;
  EditTrainConfig edit;  // edit.epochs is K
  double sigma = 0.1;
  std::vector<std::uint64_t> seeds{0};
  std::array<double, 3> split{0.5, 0.25, 0.25};
  std::optional<std::filesystem::path> output;
  ReportFormat format = ReportFormat::Rows;

  std::string dataset_name() const;
  /// Throws ConfigError when an invariant does not hold.
  void check() const;
};

/// Parses "n=400,groups=0.5,homophily=0.9,density=8,label_bias=0.8,seed=1";
/// omitted keys keep their defaults.
SyntheticSpec parse_synthetic_spec(const std::string& text);
std::string format_synthetic_spec(const SyntheticSpec& spec);

/// Applies one key = value setting.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Reads flat "key = value" lines ('#' comments allowed) and then applies
/// `overrides` on top. The result is checked.
ExperimentConfig parse_config(std::istream& file, const std::vector<std::pair<std::string, std::string>>& overrides = {});
ExperimentConfig parse_config(const std::vector<std::pair<std::string, std::string>>& overrides);

/// Echo of every resolved setting in the same key = value syntax.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& config);

struct GridPoint {
  double learning_rate = 1e-3;
  int hidden = 16;
  int depth = 2;
};

struct RunRecord {
  std::string dataset;
  std::string model;
  std::string method;
  std::string seed;  // run seed, or "mean" / "std" for aggregates
  GridPoint grid;
  double val_f1 = 0;
  FairnessReport report;
  EditTrace trace;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // selected grid point: per seed, then mean and std
  std::vector<std::pair<std::string, std::string>> config;
};

/// Loads the dataset described by `config` for one run seed.
Graph load_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Runs one training method for one grid point and seed on `g`.
TrainResult train_with_method(const ExperimentConfig& config, const GridPoint& point, const Graph& g,
                              std::uint64_t seed);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Column order of the rows format.
extern const std::array<const char*, 5> kMetricColumns;

void emit_report(const ExperimentResult& result, std::ostream& out, ReportFormat format);
void emit_report(const ExperimentResult& result, const std::filesystem::path& path, ReportFormat format);

/// Parses the structured format back into records (config echo included).
ExperimentResult parse_structured_report(std::istream& in);

}  // namespace fairedit
