#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nsda/config.hpp"
#include "nsda/harness.hpp"
#include "nsda/io.hpp"
#include "nsda/presets.hpp"

namespace fs = std::filesystem;
using namespace nsda;
using harness::ExperimentConfig;
using harness::Scenario;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> threads;
  std::string data;
  std::string test;
  std::string model;
  std::string method;
};

ExperimentConfig load(const Common& c, Scenario fallback) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = io::read_experiment_config(c.config);
  } else {
    cfg.scenario = fallback;
    if (fallback == Scenario::analytic_example) cfg.horizons = {30};
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  cfg.validate();
  return cfg;
}

fs::path out_file(const Common& c, const std::string& name) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory " + c.out + ": " + ec.message());
  return fs::path(c.out) / name;
}

template <typename F>
void write(const Common& c, const std::string& name, F&& body) {
  const auto path = out_file(c, name);
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  body(os);
  if (!os) throw IoError("write failed for " + path.string());
}

void write_json(const Common& c, const std::string& name, const io::Json& j) {
  write(c, name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

TimeLabeledDataset load_data(const std::string& path, int min_horizon) {
  if (path.empty()) throw harness::ConfigError("--data", "a dataset CSV is required");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return io::read_dataset_csv(in, path, min_horizon);
}

bool is_linear(Scenario s) { return s == Scenario::linear_em || s == Scenario::linear_gmm; }

void require_scenario(bool ok, const std::string& what) {
  if (!ok) throw harness::ConfigError("scenario", what);
}

io::Json base_manifest(const ExperimentConfig& cfg, const std::string& command) {
  return io::manifest(cfg, {}, command);
}

void cmd_simulate(const Common& c) {
  const auto cfg = load(c, Scenario::linear_em);
  require_scenario(cfg.scenario != Scenario::analytic_example, "simulate needs a linear or nonlinear scenario");
  const int T = cfg.horizons.front();
  const auto sim = cfg.scenario == Scenario::nonlinear_smc
                       ? simulate_nonlinear(cfg.nonlinear_truth(), cfg.counts.build(2, T), cfg.seed)
                       : simulate_linear(cfg.truth(), cfg.counts.build(cfg.truth().num_classes(), T), cfg.seed);
  write(c, "dataset.csv", [&](std::ostream& os) { io::write_dataset_csv(os, sim.data); });
  for (std::size_t j = 0; j < sim.latent.size(); ++j)
    write(c, "latent_class" + std::to_string(j) + ".csv", [&](std::ostream& os) { io::write_latent_csv(os, sim.latent[j]); });
  write_json(c, "manifest.json", base_manifest(cfg, "simulate"));
}

void cmd_fit_em(const Common& c) {
  const auto cfg = load(c, Scenario::linear_em);
  require_scenario(is_linear(cfg.scenario), "fit-em needs a linear scenario");
  const auto data = load_data(c.data, 0);
  const auto start = cfg.start();
  if (data.num_classes != start.num_classes() || data.dim != int(start.dim()))
    throw harness::ConfigError("init", "model shape does not match the dataset");
  LinearGaussianModel<double> fitted;
  for (int j = 0; j < data.num_classes; ++j) {
    const auto series = data.class_series(j);
    const auto fit = fit_em(series, start.classes[j], cfg.em);
    fitted.classes.push_back(fit.model);
    const auto tag = std::to_string(j);
    write(c, "em_trace_class" + tag + ".csv", [&](std::ostream& os) { io::write_em_trace_csv(os, fit.trace); });
    write(c, "smoother_class" + tag + ".csv",
          [&](std::ostream& os) { io::write_smoother_csv(os, smooth(fit.model, series)); });
  }
  write_json(c, "model.json", io::to_json(fitted));
  write_json(c, "manifest.json", base_manifest(cfg, "fit-em"));
}

void cmd_fit_gmm(const Common& c) {
  const auto cfg = load(c, Scenario::linear_gmm);
  require_scenario(is_linear(cfg.scenario), "fit-gmm needs a linear scenario");
  const auto data = load_data(c.data, 0);
  const int T = cfg.horizons.front();
  auto set = generate_candidates(cfg.start(), cfg.candidates, cfg.seed);
  if (cfg.include_truth) set.candidates.push_back(cfg.truth());
  std::vector<Matrix> unlabeled;
  for (int j = 0; j < data.num_classes; ++j) unlabeled.push_back(data.class_samples(j));
  const auto fit = fit_gmm_kalman(unlabeled, set, T);
  write_json(c, "model.json", io::to_json(fit.model));
  write(c, "labels.csv", [&](std::ostream& os) {
    os << "class,index,time\n";
    for (int j = 0; j < data.num_classes; ++j)
      for (std::size_t i = 0; i < fit.labels[j].labels.size(); ++i) os << j << ',' << i << ',' << fit.labels[j].labels[i] << '\n';
  });
  write(c, "scores.csv", [&](std::ostream& os) {
    os << "class,candidate,score,selected\n";
    for (int j = 0; j < data.num_classes; ++j)
      for (std::size_t m = 0; m < fit.scores[j].size(); ++m)
        os << j << ',' << m << ',' << io::format_double(fit.scores[j][m]) << ',' << (int(m) == fit.selected[j]) << '\n';
  });
  for (int j = 0; j < data.num_classes; ++j)
    write(c, "smoother_class" + std::to_string(j) + ".csv",
          [&](std::ostream& os) { io::write_smoother_csv(os, fit.smoothers[j]); });
  auto m = base_manifest(cfg, "fit-gmm");
  m["warnings"] = fit.warnings;
  write_json(c, "manifest.json", m);
}

void cmd_smooth(const Common& c) {
  const auto cfg = load(c, Scenario::linear_em);
  auto model = cfg.truth();
  if (!c.model.empty()) {
    std::ifstream in(c.model);
    if (!in) throw IoError("cannot open " + c.model);
    model = io::model_from_json(io::Json::parse(in), "model");
  }
  const auto data = load_data(c.data, 0);
  if (data.num_classes != model.num_classes()) throw harness::ConfigError("model", "class count does not match the dataset");
  for (int j = 0; j < data.num_classes; ++j)
    write(c, "smoother_class" + std::to_string(j) + ".csv",
          [&](std::ostream& os) { io::write_smoother_csv(os, smooth(model.classes[j], data.class_series(j))); });
  write_json(c, "manifest.json", base_manifest(cfg, "smooth"));
}

void cmd_particle_smooth(const Common& c) {
  const auto cfg = load(c, Scenario::nonlinear_smc);
  require_scenario(cfg.scenario == Scenario::nonlinear_smc, "particle-smooth needs the nonlinear_smc scenario");
  const auto model = cfg.nonlinear_truth();
  const auto data = load_data(c.data, 0);
  if (data.num_classes != model.num_classes()) throw harness::ConfigError("nonlinear", "class count does not match the dataset");
  for (int j = 0; j < data.num_classes; ++j) {
    const auto& cls = model.classes[j];
    const auto seed = substream_seed(cfg.seed, {std::uint64_t(Stream::particle), std::uint64_t(j)});
    ParticleSystem sys;
    if (cfg.estimate_theta) {
      const auto res = particle_em(data.class_series(j), cls, cls.theta, cfg.particle_em, seed);
      sys = res.system;
    } else {
      sys = particle_smooth(cls, data.class_series(j), cfg.filter, seed);
    }
    const auto tag = std::to_string(j);
    write(c, "ess_class" + tag + ".csv", [&](std::ostream& os) { io::write_ess_csv(os, sys); });
    write(c, "moments_class" + tag + ".csv", [&](std::ostream& os) { io::write_moments_csv(os, smc_moments(sys, cls.R)); });
  }
  write_json(c, "manifest.json", base_manifest(cfg, "particle-smooth"));
}

void cmd_classify(const Common& c) {
  const auto cfg = load(c, Scenario::linear_em);
  require_scenario(cfg.scenario != Scenario::analytic_example, "classify needs a linear or nonlinear scenario");
  const std::string method = c.method.empty() ? cfg.method_list().front() : c.method;
  const int T = cfg.horizons.front();
  const auto train = load_data(c.data, T);
  if (c.test.empty()) throw harness::ConfigError("--test", "a test CSV is required");
  std::ifstream tin(c.test);
  if (!tin) throw IoError("cannot open " + c.test);
  const auto test = io::read_dataset_csv(tin, c.test, train.horizon);
  if (test.dim != train.dim) throw harness::ConfigError("--test", "feature dimension differs from the training data");

  std::optional<DiscriminantRule<double>> rule;
  if (method == "naive_lda" || method == "naive_qda") {
    rule = harness::pooled_baseline(train, method == "naive_lda" ? BaselineKind::lda : BaselineKind::qda, cfg.shrink);
  } else if (method == "nslda" || method == "nsqda") {
    TimeIndexedGaussianMoments<double> moments;
    Eigen::MatrixXi counts = train.counts();
    if (cfg.scenario == Scenario::linear_em) {
      const auto start = cfg.start();
      std::vector<Matrix> R;
      for (const auto& cl : start.classes) R.push_back(cl.R);
      moments = harness::kalman_moments(harness::fit_em_smoothers(train, start, cfg.em), R, cfg.covariance);
    } else if (cfg.scenario == Scenario::linear_gmm) {
      auto set = generate_candidates(cfg.start(), cfg.candidates, cfg.seed);
      if (cfg.include_truth) set.candidates.push_back(cfg.truth());
      LinearGaussianModel<double> chosen;
      const auto sm = harness::fit_gmm_smoothers(train, set, train.horizon, &chosen, &counts);
      std::vector<Matrix> R;
      for (const auto& cl : chosen.classes) R.push_back(cl.R);
      moments = harness::kalman_moments(sm, R, cfg.covariance);
    } else {
      moments = harness::smc_class_moments(train, cfg.nonlinear_truth(), cfg.filter,
                                           cfg.estimate_theta ? &cfg.particle_em : nullptr, cfg.seed);
    }
    if (method == "nslda") rule = build_nslda(moments, cfg.pooling, counts, cfg.shrink);
    else rule = build_nsqda(moments, cfg.shrink);
  } else {
    throw harness::ConfigError("--method", "unknown method '" + method + "'");
  }

  const bool time_invariant = std::visit([](const auto& r) { return r.time_invariant; }, *rule);
  int wrong = 0;
  write(c, "predictions.csv", [&](std::ostream& os) {
    os << "class,time,predicted\n";
    for (std::size_t i = 0; i < test.samples.size(); ++i) {
      const auto& s = test.samples[i];
      if (!s.time && !time_invariant)
        throw harness::ConfigError(c.test + ":" + std::to_string(i + 2) + ":time", "time-indexed rules need a time");
      const int y = classify(*rule, s.x, s.time.value_or(0));
      wrong += y != s.label;
      os << s.label << ',' << (s.time ? std::to_string(*s.time) : "") << ',' << y << '\n';
    }
  });
  write_json(c, "rule.json", io::to_json(*rule));
  auto m = base_manifest(cfg, "classify");
  m["method"] = method;
  m["test_error"] = test.samples.empty() ? 0.0 : double(wrong) / double(test.samples.size());
  write_json(c, "manifest.json", m);
  std::cout << "{\"status\":\"ok\",\"method\":\"" << method << "\",\"test_error\":"
            << io::format_double(m["test_error"].get<double>()) << "}\n";
}

void cmd_experiment(const Common& c) {
  const auto cfg = load(c, Scenario::linear_em);
  const auto table = harness::run_scenario(cfg);
  write(c, "error_table.csv", [&](std::ostream& os) { io::write_error_table_csv(os, table); });
  write_json(c, "manifest.json", io::manifest(cfg, table, "experiment"));
}

void cmd_example_curve(const Common& c) {
  const auto cfg = load(c, Scenario::analytic_example);
  const int k_max = cfg.scenario == Scenario::analytic_example ? cfg.horizons.back() : 30;
  const auto curve = harness::example_curve(cfg.analytic, k_max);
  write(c, "example_curve.csv", [&](std::ostream& os) {
    os << "sigma,k,bayes_error,frozen_error\n";
    for (const auto& p : curve)
      os << io::format_double(p.sigma) << ',' << p.k << ',' << io::format_double(p.errors.bayes) << ','
         << io::format_double(p.errors.frozen) << '\n';
  });
  write_json(c, "manifest.json", base_manifest(cfg, "example-curve"));
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << io::Json{{"status", "error"}, {"kind", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonstationary discriminant analysis"};
  app.require_subcommand(1);
  Common common;

  struct Entry {
    const char* name;
    const char* help;
    void (*run)(const Common&);
  };
  const Entry entries[] = {
      {"simulate", "Simulate a training dataset", cmd_simulate},
      {"fit-em", "Fit per-class models with EM", cmd_fit_em},
      {"fit-gmm", "Recover time labels and models with GMM-Kalman", cmd_fit_gmm},
      {"smooth", "Kalman-smooth each class", cmd_smooth},
      {"particle-smooth", "Particle-smooth each class of the nonlinear model", cmd_particle_smooth},
      {"classify", "Fit a rule on --data and classify --test", cmd_classify},
      {"experiment", "Run a Monte Carlo experiment", cmd_experiment},
      {"example-curve", "Bayes and frozen-rule error curves of the univariate example", cmd_example_curve},
  };
  void (*selected)(const Common&) = nullptr;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", common.config, "Experiment config (JSON)");
    sub->add_option("--seed", common.seed, "Master seed override");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    const std::string n = e.name;
    if (n == "fit-em" || n == "fit-gmm" || n == "smooth" || n == "particle-smooth" || n == "classify")
      sub->add_option("--data", common.data, "Training dataset CSV")->required();
    if (n == "smooth") sub->add_option("--model", common.model, "Model JSON; defaults to the config model");
    if (n == "classify") {
      sub->add_option("--test", common.test, "Test dataset CSV")->required();
      sub->add_option("--method", common.method, "nslda, nsqda, naive_lda or naive_qda");
    }
    sub->callback([&selected, run = e.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    selected(common);
  } catch (const harness::ConfigError& e) {
    return fail("config_error", e.what(), 2);
  } catch (const io::FormatError& e) {
    return fail("format_error", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return fail("format_error", e.what(), 2);
  } catch (const InvalidArgument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const NumericalError& e) {
    return fail("numerical_error", e.what(), 3);
  } catch (const IoError& e) {
    return fail("io_error", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
  return 0;
}
