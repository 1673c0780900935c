#include "fairedit/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fairedit;

namespace {

using Settings = std::vector<std::pair<std::string, std::string>>;

// Small, fast synthetic run.
Settings quick(std::string method) {
  return {{"synthetic", "n=100,density=4,label_bias=0.5,seed=3"}, {"method", std::move(method)}, {"lr", "0.01"}, {"hidden", "8"},
          {"depth", "2"},  {"K", "12"},  {"alpha", "2"}, {"seeds", "1,2"}};
}

std::string rows(const ExperimentResult& r) {
  std::ostringstream out;
  emit_report(r, out, ReportFormat::Rows);
  return out.str();
}

}  // namespace

TEST_CASE("parse_config defaults") {
  const auto c = parse_config({{"synthetic", "n=100"}});
  CHECK(c.edit.alpha == 10);
  CHECK(c.edit.epochs == 1000);
  CHECK(c.edit.mask_iters == 5);
  CHECK(c.edit.binarize_threshold == 0.5);
  CHECK(c.sigma == 0.1);
  CHECK(c.learning_rates == std::vector<double>{1e-3, 1e-4, 1e-5});
  CHECK(c.hidden_sizes == std::vector<int>{16, 32});
  CHECK(c.depths == std::vector<int>{2, 3});
  CHECK(c.method == Method::Standard);
  CHECK(c.dataset.synthetic->n == 100);
  CHECK(c.dataset.synthetic->homophily == 0.9);
}

TEST_CASE("parse_config file and overrides") {
  std::istringstream file(
      "# comment\n"
      "method = FairEdit\n"
      "model = sage   # trailing comment\n"
      "lr = 0.01, 0.001\n"
      "synthetic = n=50,homophily=0.7\n");
  const auto c = parse_config(file, {{"model", "appnp"}});
  CHECK(c.method == Method::FairEdit);
  CHECK(c.model == Architecture::APPNP);
  CHECK(c.learning_rates == std::vector<double>{0.01, 0.001});
  CHECK(c.edit.rho == 0.01);
  CHECK(c.edit.gamma == 0.05);
  CHECK(c.edit.mask_init == 0.95);
  CHECK(c.dataset.synthetic->homophily == 0.7);
}

TEST_CASE("parse_config errors") {
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100"}, {"alpha", "-1"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100"}, {"learning_rate", "0.1"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100"}, {"hidden", "abc"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100"}, {"K", "5"}}), ConfigError);  // alpha 10 > K
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100"}, {"seeds", ""}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100"}, {"split", "0.5,0.5,0.5"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"synthetic", "n=100,colour=red"}}), ConfigError);
  std::istringstream bad("method FairEdit\n");
  CHECK_THROWS_AS(parse_config(bad, {{"synthetic", "n=100"}}), ConfigError);
}

TEST_CASE("config echo parses back to the same config") {
  const auto c = parse_config(quick("bruteforce"));
  Settings echo;
  for (const auto& [k, v] : config_echo(c)) {
    if (k != "dataset") echo.emplace_back(k, v);
  }
  const auto back = parse_config(echo);
  CHECK(config_echo(back) == config_echo(c));
}

TEST_CASE("untrained standard run") {
  auto s = quick("standard");
  s.emplace_back("K", "0");
  s.emplace_back("alpha", "0");
  const auto r = run_experiment(parse_config(s));
  REQUIRE(r.records.size() == 4);
  CHECK(r.records[0].seed == "1");
  CHECK(r.records[2].seed == "mean");
  CHECK(r.records[3].seed == "std");
  for (const auto& rec : r.records) {
    for (double v : {rec.report.f1, rec.report.unfairness, rec.report.instability, rec.report.delta_sp,
                     rec.report.delta_eo}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(r.records[2].report.f1 == doctest::Approx((r.records[0].report.f1 + r.records[1].report.f1) / 2));
}

TEST_CASE("runs are deterministic") {
  for (const char* method : {"standard", "bruteforce", "fairedit"}) {
    const auto c = parse_config(quick(method));
    CHECK(rows(run_experiment(c)) == rows(run_experiment(c)));
  }
}

TEST_CASE("brute force refusal surfaces from the runner") {
  auto s = quick("bruteforce");
  s.emplace_back("candidate_cap", "10");
  CHECK_THROWS_AS(run_experiment(parse_config(s)), CandidateLimitError);
  s.emplace_back("sample_cap", "20");
  CHECK(run_experiment(parse_config(s)).records.size() == 4);
}

TEST_CASE("grid search picks the best mean validation F1") {
  auto s = quick("standard");
  s.emplace_back("lr", "0.01,0.00001");
  s.emplace_back("K", "30");
  const auto c = parse_config(s);
  const auto r = run_experiment(c);
  double best = -1;
  GridPoint chosen{};
  for (double lr : c.learning_rates) {
    GridPoint p{lr, 8, 2};
    double total = 0;
    for (auto seed : c.seeds) {
      const auto run = train_with_method(c, p, load_dataset(c, seed), seed);
      total += f1_score(predict(logits(run.params, run.graph)), run.graph.labels(), run.graph.val_mask());
    }
    if (total / static_cast<double>(c.seeds.size()) > best) {
      best = total / static_cast<double>(c.seeds.size());
      chosen = p;
    }
  }
  CHECK(r.records[0].grid.learning_rate == chosen.learning_rate);
  CHECK(r.records[2].val_f1 == doctest::Approx(best));
}

TEST_CASE("emit_report") {
  auto s = quick("fairedit");
  s.emplace_back("seeds", "4");
  const auto r = run_experiment(parse_config(s));

  SUBCASE("rows") {
    ExperimentResult one = r;
    one.records.resize(1);
    const auto text = rows(one);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.rfind("dataset,model,method,seed,f1,unfairness,instability,delta_sp,delta_eo\n", 0) == 0);
    CHECK(text.find("gcn,fairedit,4,") != std::string::npos);
  }
  SUBCASE("structured round trip") {
    std::stringstream ss;
    emit_report(r, ss, ReportFormat::Structured);
    const auto back = parse_structured_report(ss);
    REQUIRE(back.records.size() == r.records.size());
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      const auto& a = r.records[i].report;
      const auto& b = back.records[i].report;
      CHECK(a.f1 == b.f1);
      CHECK(a.unfairness == b.unfairness);
      CHECK(a.instability == b.instability);
      CHECK(a.delta_sp == b.delta_sp);
      CHECK(a.delta_eo == b.delta_eo);
      CHECK(back.records[i].seed == r.records[i].seed);
      CHECK(back.records[i].trace.entries.size() == r.records[i].trace.entries.size());
    }
    CHECK(back.config == r.config);
  }
  SUBCASE("files") {
    const auto path = std::filesystem::temp_directory_path() / "fairedit_report_test.csv";
    emit_report(r, path, ReportFormat::Rows);
    std::ifstream in(path);
    std::stringstream content;
    content << in.rdbuf();
    CHECK(content.str() == rows(r));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(emit_report(r, std::filesystem::path("/nonexistent/dir/report.csv"), ReportFormat::Rows),
                    DataError);
  }
  SUBCASE("empty") { CHECK_THROWS(rows(ExperimentResult{})); }
}
