#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "nsda/config.hpp"
#include "nsda/harness.hpp"
#include "nsda/io.hpp"
#include "nsda/presets.hpp"

using namespace nsda;
using namespace nsda::harness;
namespace fs = std::filesystem;

namespace {

std::string table_csv(const ErrorTable& t) {
  std::ostringstream os;
  io::write_error_table_csv(os, t);
  return os.str();
}

Generator labeled_points(int T, int per_time) {
  return [=](std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n01;
    Trial t;
    for (int k = 0; k <= T; ++k) {
      Matrix X(1, per_time);
      std::vector<int> y(per_time);
      for (int i = 0; i < per_time; ++i) {
        y[i] = i % 2;
        X(0, i) = (y[i] ? 10.0 : -10.0) + n01(rng);
      }
      t.test.X.push_back(X);
      t.test.labels.push_back(y);
    }
    return t;
  };
}

struct CliResult {
  int status;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(NSDA_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof buf, p)) out += buf;
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("nsda_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(DatasetCsv, RoundTripWithUntimedSamples) {
  auto sim = simulate_linear(presets::table1_model(), presets::uniform_counts(2, 3, 2), 5).data;
  sim.samples[1].time.reset();
  std::ostringstream os;
  io::write_dataset_csv(os, sim);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "class,time,x0,x1");
  EXPECT_NE(os.str().find("\n0,,"), std::string::npos);
  std::istringstream is(os.str());
  const auto back = io::read_dataset_csv(is);
  ASSERT_EQ(back.samples.size(), sim.samples.size());
  EXPECT_EQ(back.horizon, 3);
  for (std::size_t i = 0; i < sim.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].label, sim.samples[i].label);
    EXPECT_EQ(back.samples[i].time, sim.samples[i].time);
    EXPECT_EQ(back.samples[i].x, sim.samples[i].x);  // shortest round-trip formatting
  }
}

TEST(DatasetCsv, ErrorsNameTheLine) {
  std::istringstream bad("class,time,x0\n0,1,0.5\n1,2,abc\n");
  try {
    io::read_dataset_csv(bad, "d.csv");
    FAIL();
  } catch (const io::FormatError& e) {
    EXPECT_EQ(e.path(), "d.csv:3:x0");
  }
  std::istringstream header("label,time,x0\n");
  EXPECT_THROW(io::read_dataset_csv(header), io::FormatError);
  std::istringstream ragged("class,time,x0\n0,1\n");
  EXPECT_THROW(io::read_dataset_csv(ragged), io::FormatError);
}

TEST(ModelJson, RoundTripIsRowMajor) {
  const auto m = presets::table1_model();
  const auto j = io::to_json(m);
  EXPECT_EQ(j["classes"][0]["A"][1][0].get<double>(), 0.9);
  const auto back = io::model_from_json(io::Json::parse(j.dump()), "model");
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(back.classes[c].A, m.classes[c].A);
    EXPECT_EQ(back.classes[c].mu0, m.classes[c].mu0);
    EXPECT_EQ(back.classes[c].K0, m.classes[c].K0);
  }
  auto broken = j;
  broken["classes"][1]["Q"][0] = {1.0};
  try {
    io::model_from_json(broken, "model");
    FAIL();
  } catch (const io::FormatError& e) {
    EXPECT_EQ(e.path(), "model.classes[1].Q[1]");
  }
}

TEST(Config, DefaultsAndFieldPaths) {
  const auto cfg = io::experiment_config_from_json(io::Json::parse(R"({"scenario": "linear_em"})"));
  EXPECT_EQ(cfg.runs, 200);
  EXPECT_EQ(cfg.test_size, 1000);
  EXPECT_EQ(cfg.method_list(), (std::vector<std::string>{"nslda", "naive_lda"}));

  auto expect_path = [](const char* text, const std::string& prefix) {
    try {
      io::experiment_config_from_json(io::Json::parse(text));
      ADD_FAILURE() << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(std::string(e.what()).rfind(prefix, 0), 0u) << e.what();
    }
  };
  expect_path(R"({"scenario": "linear_em", "runs": 0})", "runs:");
  expect_path(R"({"scenario": "linear_em", "horizons": []})", "horizons:");
  expect_path(R"({"scenario": "linear_em", "horizons": [4, "x"]})", "horizons[1]:");
  expect_path(R"({"scenario": "linear_em", "em": {"tol": -1}})", "em:");
  expect_path(R"({"scenario": "linear_em", "em": {"estimate": {"B": true}}})", "em.estimate.B:");
  expect_path(R"({"scenario": "linear_em", "counts": {"overrides": [{"time": 1, "n": -2}]}})",
              "counts.overrides[0].n:");
  expect_path(R"({"scenario": "nonlinear_smc", "particle": {"N": 1}})", "particle.N:");
  expect_path(R"({"scenario": "analytic_example", "methods": ["nslda"]})", "methods[0]:");
  expect_path(R"({"scenario": "warp"})", "scenario:");
  expect_path(R"({"runs": 3})", "scenario:");
}

TEST(Config, CanonicalFormParsesBack) {
  const auto cfg = io::experiment_config_from_json(
      io::Json::parse(R"({"scenario": "linear_gmm", "horizons": [3, 5], "gmm": {"include_truth": true}})"));
  const auto again = io::experiment_config_from_json(io::to_json(cfg));
  EXPECT_EQ(io::to_json(again).dump(), io::to_json(cfg).dump());
}

TEST(CompensatedSum, RecoversCancelledTerms) {
  const std::vector<double> v{1.0, 1e100, 1.0, -1e100};
  EXPECT_EQ(compensated_sum(v), 2.0);
  std::vector<double> tenths(1000000, 0.1);
  EXPECT_NEAR(compensated_sum(tenths), 100000.0, 1e-9);
}

TEST(MonteCarlo, PerfectClassifierHasZeroError) {
  Estimator e{{"perfect"}, [](const Trial&, std::uint64_t) {
                return std::vector<Classifier>{[](const Vector& x, int) { return x[0] > 0 ? 1 : 0; }};
              }};
  const auto t = monte_carlo_error({e}, labeled_points(3, 100), {3, 20, 1, 1});
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.error, 0.0);
    EXPECT_EQ(r.stderr_, 0.0);
    EXPECT_EQ(r.runs, 20);
  }
  EXPECT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.rows.back().k, -1);
}

TEST(MonteCarlo, CoinFlipIsHalf) {
  Estimator e{{"coin"}, [](const Trial&, std::uint64_t seed) {
                auto rng = std::make_shared<Rng>(seed);
                return std::vector<Classifier>{[rng](const Vector&, int) { return int((*rng)() & 1u); }};
              }};
  const auto t = monte_carlo_error({e}, labeled_points(2, 200), {2, 100, 9, 1});
  for (const auto& r : t.rows) EXPECT_LT(std::abs(r.error - 0.5), 3.0 * r.stderr_) << r.k;
}

TEST(MonteCarlo, FailuresAreCountedAndExcluded) {
  Estimator e{{"flaky"}, [](const Trial& t, std::uint64_t) -> std::vector<Classifier> {
                if (t.test.X[0](0, 1) > 10.5) throw NumericalError("unlucky draw");
                return {[](const Vector& x, int) { return x[0] > 0 ? 1 : 0; }};
              }};
  const int runs = 60;
  const auto t = monte_carlo_error({e}, labeled_points(1, 4), {1, runs, 4, 1});
  ASSERT_EQ(t.failures.size(), 1u);
  EXPECT_GT(t.failures[0].failures, 0);
  EXPECT_LT(t.failures[0].failures, runs);
  EXPECT_EQ(t.failures[0].first_error, "unlucky draw");
  for (const auto& r : t.rows) EXPECT_EQ(r.runs + t.failures[0].failures, runs);
  int nan_records = 0;
  for (const auto& rec : t.run_records) nan_records += std::isnan(rec.average);
  EXPECT_EQ(nan_records, t.failures[0].failures);
}

TEST(MonteCarlo, StandardErrorIsSampleStdOverRootRuns) {
  // Per-run error is 0 or 1 at k = 0 depending on the seed.
  Estimator e{{"m"}, [](const Trial&, std::uint64_t seed) {
                const int flip = int(seed & 1u);
                return std::vector<Classifier>{[flip](const Vector&, int) { return flip; }};
              }};
  Generator g = [](std::uint64_t) {
    Trial t;
    t.test.X = {Matrix::Zero(1, 1)};
    t.test.labels = {{0}};
    return t;
  };
  const int runs = 50;
  const auto t = monte_carlo_error({e}, g, {0, runs, 2, 1});
  std::vector<double> v;
  for (int r = 0; r < runs; ++r) {
    const auto seed = substream_seed(run_seed(2, 0, r), {12, 0});
    v.push_back(double(seed & 1u));
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / runs;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(t.rows[0].error, mean, 1e-15);
  EXPECT_NEAR(t.rows[0].stderr_, std::sqrt(ss / (runs - 1)) / std::sqrt(double(runs)), 1e-15);
}

TEST(Scenario, ThreadCountDoesNotChangeOutput) {
  auto cfg = io::experiment_config_from_json(
      io::Json::parse(R"({"scenario": "linear_em", "horizons": [3, 5], "runs": 12, "test_size": 50, "seed": 8})"));
  const auto one = table_csv(run_scenario(cfg));
  cfg.threads = 3;
  EXPECT_EQ(table_csv(run_scenario(cfg)), one);
  EXPECT_EQ(table_csv(run_scenario(cfg)), one);
}

TEST(Scenario, AverageRowLiesWithinPerTimeRange) {
  const auto cfg = io::experiment_config_from_json(io::Json::parse(
      R"({"scenario": "linear_em", "horizons": [6], "runs": 15, "test_size": 100, "methods": ["nslda", "nsqda", "naive_lda", "naive_qda"]})"));
  const auto t = run_scenario(cfg);
  for (const std::string m : {"nslda", "nsqda", "naive_lda", "naive_qda"}) {
    double lo = 1.0, hi = 0.0;
    for (int k = 0; k <= 6; ++k) {
      const double e = t.at(m, 6, k).error;
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    const double avg = t.at(m, 6, -1).error;
    EXPECT_GE(avg, lo - 1e-12);
    EXPECT_LE(avg, hi + 1e-12);
  }
}

TEST(Scenario, AnalyticRuleMatchesClosedForm) {
  const auto cfg = io::experiment_config_from_json(
      io::Json::parse(R"({"scenario": "analytic_example", "horizons": [10], "runs": 200, "test_size": 1000})"));
  const auto t = run_scenario(cfg);
  int outside = 0;
  for (int k = 0; k <= 10; ++k) {
    const auto exact = example_errors(cfg.analytic.params, k);
    const auto& b = t.at("bayes_rule", 10, k);
    const auto& f = t.at("frozen_rule", 10, k);
    outside += std::abs(b.error - exact.bayes) > 3.0 * b.stderr_;
    outside += std::abs(f.error - exact.frozen) > 3.0 * f.stderr_;
  }
  EXPECT_LE(outside, 1);
}

TEST(Scenario, ExampleCurveOrdering) {
  AnalyticSpec spec;
  const auto curve = example_curve(spec, 30);
  ASSERT_EQ(curve.size(), 3u * 31u);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].errors.frozen, curve[i].errors.bayes - 1e-12);
    if (curve[i].k > 0) {
      EXPECT_GE(curve[i].errors.bayes, curve[i - 1].errors.bayes);
      EXPECT_GE(curve[i].errors.frozen, curve[i - 1].errors.frozen);
    }
    EXPECT_LE(curve[i].errors.frozen, 0.5 + 1e-12);
  }
}

TEST(Scenario, EmNsldaBeatsPooledLdaAtLongHorizon) {
  const auto cfg = io::experiment_config_from_json(
      io::Json::parse(R"({"scenario": "linear_em", "horizons": [10], "runs": 30, "test_size": 200, "seed": 4})"));
  const auto t = run_scenario(cfg);
  EXPECT_LT(t.at("nslda", 10, -1).error, t.at("naive_lda", 10, -1).error);
}

TEST(Scenario, GmmAndNonlinearRunWithoutFailures) {
  for (const char* text :
       {R"({"scenario": "linear_gmm", "horizons": [4], "runs": 4, "test_size": 100, "gmm": {"include_truth": true}})",
        R"({"scenario": "nonlinear_smc", "horizons": [4], "runs": 3, "test_size": 100, "particle": {"N": 300},
            "counts": {"per_class": [10, 3], "overrides": [{"time": 2, "n": 0}]}})"}) {
    const auto t = run_scenario(io::experiment_config_from_json(io::Json::parse(text)));
    for (const auto& f : t.failures) EXPECT_EQ(f.failures, 0) << f.method << ": " << f.first_error;
  }
}

TEST(Cli, ExperimentWritesTableAndManifest) {
  const auto dir = scratch("cli_experiment");
  std::ofstream(dir / "cfg.json") << R"({"scenario": "linear_em", "horizons": [3], "runs": 4, "test_size": 20})";
  const auto r = run_cli("experiment --config " + (dir / "cfg.json").string() + " --out " + (dir / "out").string() +
                         " --seed 5 --threads 2");
  ASSERT_EQ(r.status, 0) << r.output;
  std::ifstream table(dir / "out" / "error_table.csv");
  std::string header;
  std::getline(table, header);
  EXPECT_EQ(header, "method,T,k,error,stderr,runs");
  const auto manifest = io::Json::parse(std::ifstream(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["seed"].get<int>(), 5);
  EXPECT_EQ(manifest["config_hash"].get<std::string>().size(), 16u);
  EXPECT_EQ(manifest["failures"].size(), 2u);
}

TEST(Cli, PipelineFromSimulationToClassification) {
  const auto dir = scratch("cli_pipeline");
  std::ofstream(dir / "cfg.json") << R"({"scenario": "linear_em", "horizons": [5], "counts": {"per_time": 8}})";
  const auto cfg = " --config " + (dir / "cfg.json").string();
  ASSERT_EQ(run_cli("simulate" + cfg + " --seed 1 --out " + (dir / "train").string()).status, 0);
  ASSERT_EQ(run_cli("simulate" + cfg + " --seed 2 --out " + (dir / "test").string()).status, 0);
  const auto data = " --data " + (dir / "train" / "dataset.csv").string();
  auto r = run_cli("fit-em" + cfg + data + " --out " + (dir / "em").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "em" / "em_trace_class1.csv"));
  r = run_cli("smooth" + cfg + data + " --model " + (dir / "em" / "model.json").string() + " --out " +
              (dir / "sm").string());
  ASSERT_EQ(r.status, 0) << r.output;
  std::ifstream sm(dir / "sm" / "smoother_class0.csv");
  std::string line;
  int rows = 0;
  while (std::getline(sm, line)) ++rows;
  EXPECT_EQ(rows, 1 + 6);
  r = run_cli("classify" + cfg + data + " --test " + (dir / "test" / "dataset.csv").string() + " --out " +
              (dir / "cls").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("\"status\":\"ok\""), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "cls" / "rule.json"));
  r = run_cli("fit-gmm" + cfg + data + " --out " + (dir / "gmm").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "gmm" / "labels.csv"));
  r = run_cli("example-curve --out " + (dir / "curve").string());
  ASSERT_EQ(r.status, 0) << r.output;
}

TEST(Cli, ParticleSmoothWritesEss) {
  const auto dir = scratch("cli_particle");
  std::ofstream(dir / "cfg.json") << R"({"scenario": "nonlinear_smc", "horizons": [3], "counts": {"per_time": 4},
                                         "particle": {"N": 200}})";
  const auto cfg = " --config " + (dir / "cfg.json").string();
  ASSERT_EQ(run_cli("simulate" + cfg + " --out " + dir.string()).status, 0);
  const auto r = run_cli("particle-smooth" + cfg + " --data " + (dir / "dataset.csv").string() + " --out " +
                         (dir / "ps").string());
  ASSERT_EQ(r.status, 0) << r.output;
  std::ifstream ess(dir / "ps" / "ess_class0.csv");
  std::string header;
  std::getline(ess, header);
  EXPECT_EQ(header, "k,ess_forward,ess_smoothed");
}

TEST(Cli, FailuresEmitOneJsonLine) {
  const auto dir = scratch("cli_fail");
  std::ofstream(dir / "cfg.json") << R"({"scenario": "linear_em", "runs": 0})";
  auto r = run_cli("experiment --config " + (dir / "cfg.json").string() + " --out " + dir.string());
  EXPECT_EQ(r.status, 2);
  const auto j = io::Json::parse(r.output);
  EXPECT_EQ(j["status"], "error");
  EXPECT_EQ(j["kind"], "config_error");
  EXPECT_EQ(j["message"].get<std::string>().rfind("runs:", 0), 0u);
  EXPECT_FALSE(fs::exists(dir / "error_table.csv"));

  r = run_cli("smooth --data " + (dir / "missing.csv").string());
  EXPECT_NE(r.status, 0);
  EXPECT_EQ(io::Json::parse(r.output)["kind"], "io_error");
  r = run_cli("bogus");
  EXPECT_NE(r.status, 0);
}
