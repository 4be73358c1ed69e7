#include "nsda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <thread>

#include "nsda/presets.hpp"

namespace nsda::harness {

namespace {

constexpr std::uint64_t kTrainStream = 11;
constexpr std::uint64_t kEstimatorStream = 12;

std::string idx(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

std::vector<std::string> allowed_methods(Scenario s) {
  if (s == Scenario::analytic_example) return {"bayes_rule", "frozen_rule"};
  return {"nslda", "nsqda", "naive_lda", "naive_qda"};
}

bool wants(const std::vector<std::string>& methods, const std::string& m) {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

Classifier wrap(std::shared_ptr<const DiscriminantRule<double>> rule) {
  return [rule](const Vector& x, int k) { return classify(*rule, x, k); };
}

/// Estimator yielding the requested subset of {nslda, nsqda} from a moment fit.
Estimator time_indexed(const std::vector<std::string>& methods, const ExperimentConfig& cfg,
                       std::function<std::pair<TimeIndexedGaussianMoments<double>, Eigen::MatrixXi>(
                           const Trial&, std::uint64_t)> fit) {
  Estimator e;
  for (const char* m : {"nslda", "nsqda"})
    if (wants(methods, m)) e.methods.push_back(m);
  e.build = [fit, pooling = cfg.pooling, shrink = cfg.shrink, names = e.methods](const Trial& t, std::uint64_t seed) {
    const auto [moments, counts] = fit(t, seed);
    std::vector<Classifier> out;
    for (const auto& m : names) {
      auto rule = m == "nslda" ? DiscriminantRule<double>(build_nslda(moments, pooling, counts, shrink))
                               : DiscriminantRule<double>(build_nsqda(moments, shrink));
      out.push_back(wrap(std::make_shared<const DiscriminantRule<double>>(std::move(rule))));
    }
    return out;
  };
  return e;
}

Estimator naive(const std::vector<std::string>& methods, const ShrinkConfig& shrink) {
  Estimator e;
  for (const char* m : {"naive_lda", "naive_qda"})
    if (wants(methods, m)) e.methods.push_back(m);
  e.build = [shrink, names = e.methods](const Trial& t, std::uint64_t) {
    std::vector<Classifier> out;
    for (const auto& m : names) {
      auto rule = pooled_baseline(t.train, m == "naive_lda" ? BaselineKind::lda : BaselineKind::qda, shrink);
      out.push_back(wrap(std::make_shared<const DiscriminantRule<double>>(std::move(rule))));
    }
    return out;
  };
  return e;
}

std::vector<Matrix> observation_noise(const LinearGaussianModel<double>& m) {
  std::vector<Matrix> R;
  for (const auto& c : m.classes) R.push_back(c.R);
  return R;
}

std::vector<Matrix> observation_noise(const NonlinearModel& m) {
  std::vector<Matrix> R;
  for (const auto& c : m.classes) R.push_back(c.R);
  return R;
}

void check_count(int n, const std::string& path) {
  if (n < 0) throw ConfigError(path, "counts must be nonnegative");
}

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::analytic_example: return "analytic_example";
    case Scenario::linear_em: return "linear_em";
    case Scenario::linear_gmm: return "linear_gmm";
    case Scenario::nonlinear_smc: return "nonlinear_smc";
  }
  return "?";
}

std::vector<std::string> default_methods(Scenario s) {
  if (s == Scenario::analytic_example) return {"bayes_rule", "frozen_rule"};
  return {"nslda", "naive_lda"};
}

Eigen::MatrixXi CountSpec::build(int num_classes, int horizon) const {
  Eigen::MatrixXi n(num_classes, horizon + 1);
  for (int j = 0; j < num_classes; ++j) n.row(j).setConstant(per_class.empty() ? per_time : per_class[j]);
  for (const auto& o : overrides) {
    if (o.time > horizon) continue;
    for (int j = 0; j < num_classes; ++j)
      if (o.cls < 0 || o.cls == j) n(j, o.time) = o.n;
  }
  return n;
}

LinearGaussianModel<double> ExperimentConfig::truth() const { return model ? *model : presets::table1_model(); }

LinearGaussianModel<double> ExperimentConfig::start() const {
  if (init) return *init;
  const auto t = truth();
  return model ? t : presets::table2_init(t);
}

NonlinearModel ExperimentConfig::nonlinear_truth() const {
  return presets::nonlinear_model(nonlinear.observation_noise, nonlinear.transition_noise, nonlinear.step);
}

std::vector<std::string> ExperimentConfig::method_list() const {
  return methods.empty() ? default_methods(scenario) : methods;
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw ConfigError("runs", "must be at least 1");
  if (horizons.empty()) throw ConfigError("horizons", "must be nonempty");
  for (std::size_t i = 0; i < horizons.size(); ++i)
    if (horizons[i] < 0) throw ConfigError(idx("horizons", i), "must be nonnegative");
  if (threads < 1) throw ConfigError("threads", "must be at least 1");

  const auto allowed = allowed_methods(scenario);
  const auto list = method_list();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!wants(allowed, list[i]))
      throw ConfigError(idx("methods", i), "'" + list[i] + "' is not available for scenario " + to_string(scenario));
    if (!seen.insert(list[i]).second) throw ConfigError(idx("methods", i), "duplicate method");
  }

  if (scenario == Scenario::analytic_example) {
    if (test_size < 2) throw ConfigError("test_size", "must be at least 2");
    try {
      example_errors(analytic.params, 0);
    } catch (const std::exception& e) {
      throw ConfigError("analytic", e.what());
    }
    for (std::size_t i = 0; i < analytic.sigmas.size(); ++i)
      if (!(analytic.sigmas[i] >= 0.0)) throw ConfigError(idx("analytic.sigmas", i), "must be nonnegative");
    return;
  }

  int classes = 2;
  if (scenario == Scenario::nonlinear_smc) {
    if (!(nonlinear.observation_noise > 0.0)) throw ConfigError("nonlinear.observation_noise", "must be positive");
    if (!(nonlinear.transition_noise > 0.0)) throw ConfigError("nonlinear.transition_noise", "must be positive");
    if (filter.N < 2) throw ConfigError("particle.N", "must be at least 2");
    if (filter.lookahead_draws < 1) throw ConfigError("particle.lookahead_draws", "must be at least 1");
    if (estimate_theta) {
      try {
        particle_em.validate(1);
      } catch (const std::exception& e) {
        throw ConfigError("particle.em", e.what());
      }
    }
  } else {
    try {
      truth().validate();
    } catch (const std::exception& e) {
      throw ConfigError("model", e.what());
    }
    try {
      const auto s = start();
      s.validate();
      if (s.num_classes() != truth().num_classes() || s.dim() != truth().dim())
        throw InvalidArgument("shape differs from the model");
    } catch (const std::exception& e) {
      throw ConfigError("init", e.what());
    }
    classes = truth().num_classes();
    try {
      em.validate();
    } catch (const std::exception& e) {
      throw ConfigError("em", e.what());
    }
    try {
      candidates.validate();
    } catch (const std::exception& e) {
      throw ConfigError("gmm", e.what());
    }
  }

  if (test_size < classes) throw ConfigError("test_size", "must cover every class");
  check_count(counts.per_time, "counts.per_time");
  if (!counts.per_class.empty() && int(counts.per_class.size()) != classes)
    throw ConfigError("counts.per_class", "needs one entry per class");
  for (std::size_t j = 0; j < counts.per_class.size(); ++j) check_count(counts.per_class[j], idx("counts.per_class", j));
  for (std::size_t i = 0; i < counts.overrides.size(); ++i) {
    const auto& o = counts.overrides[i];
    const auto p = idx("counts.overrides", i);
    if (o.cls < -1 || o.cls >= classes) throw ConfigError(p + ".class", "out of range");
    if (o.time < 0) throw ConfigError(p + ".time", "must be nonnegative");
    check_count(o.n, p + ".n");
  }
  if (!(shrink.max_condition > 1.0)) throw ConfigError("shrink.max_condition", "must exceed 1");
}

void ErrorTable::append(const ErrorTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
  run_records.insert(run_records.end(), other.run_records.begin(), other.run_records.end());
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

const ErrorRow& ErrorTable::at(const std::string& method, int T, int k) const {
  for (const auto& r : rows)
    if (r.method == method && r.T == T && r.k == k) return r;
  throw InvalidArgument("no error row for " + method + ", T=" + std::to_string(T) + ", k=" + std::to_string(k));
}

double compensated_sum(const std::vector<double>& v) {
  double sum = 0.0, c = 0.0;
  for (double x : v) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t run_seed(std::uint64_t seed, int horizon, int run) {
  return substream_seed(seed, {std::uint64_t(horizon), std::uint64_t(run)});
}

ErrorTable monte_carlo_error(const std::vector<Estimator>& estimators, const Generator& generator,
                             const MonteCarloConfig& config) {
  require(config.runs >= 1, "runs must be at least 1");
  require(config.horizon >= 0, "horizon must be nonnegative");
  const int T = config.horizon;
  std::vector<std::string> names;
  for (const auto& e : estimators) names.insert(names.end(), e.methods.begin(), e.methods.end());
  const std::size_t M = names.size();

  // [method][run], empty when the run failed
  std::vector<std::vector<std::vector<double>>> errors(M, std::vector<std::vector<double>>(config.runs));
  std::vector<std::vector<std::string>> messages(M, std::vector<std::string>(config.runs));

  auto score = [T](const Classifier& f, const TestSet& test) {
    std::vector<double> err(T + 1);
    for (int k = 0; k <= T; ++k) {
      const auto& X = test.X[k];
      require(X.cols() > 0, "empty test set at k=" + std::to_string(k));
      int wrong = 0;
      for (Eigen::Index i = 0; i < X.cols(); ++i) wrong += f(X.col(i), k) != test.labels[k][i];
      err[k] = double(wrong) / double(X.cols());
    }
    return err;
  };

  auto run_one = [&](int r) {
    const std::uint64_t seed = run_seed(config.seed, T, r);
    Trial trial;
    try {
      trial = generator(seed);
      require(int(trial.test.X.size()) == T + 1, "test set must cover 0..T");
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < M; ++m) messages[m][r] = std::string("generator: ") + e.what();
      return;
    }
    std::size_t base = 0;
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const auto& est = estimators[e];
      try {
        const auto fs = est.build(trial, substream_seed(seed, {kEstimatorStream, e}));
        require(fs.size() == est.methods.size(), "estimator returned the wrong number of classifiers");
        std::vector<std::vector<double>> local;
        for (const auto& f : fs) local.push_back(score(f, trial.test));
        for (std::size_t i = 0; i < fs.size(); ++i) errors[base + i][r] = std::move(local[i]);
      } catch (const std::exception& ex) {
        for (std::size_t i = 0; i < est.methods.size(); ++i) messages[base + i][r] = ex.what();
      }
      base += est.methods.size();
    }
  };

  const int workers = std::max(1, std::min(config.threads, config.runs));
  if (workers == 1) {
    for (int r = 0; r < config.runs; ++r) run_one(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = next++; r < config.runs; r = next++) run_one(r);
      });
    }
    for (auto& t : pool) t.join();
  }

  ErrorTable table;
  for (std::size_t m = 0; m < M; ++m) {
    FailureCount fc{names[m], T, 0, ""};
    std::vector<std::vector<double>> per_k(T + 2);  // slot T+1 holds the per-run averages
    for (int r = 0; r < config.runs; ++r) {
      if (errors[m][r].empty()) {
        if (fc.failures++ == 0) fc.first_error = messages[m][r];
        table.run_records.push_back({names[m], T, r, std::numeric_limits<double>::quiet_NaN()});
        continue;
      }
      for (int k = 0; k <= T; ++k) per_k[k].push_back(errors[m][r][k]);
      per_k[T + 1].push_back(compensated_sum(errors[m][r]) / double(T + 1));
      table.run_records.push_back({names[m], T, r, per_k[T + 1].back()});
    }
    for (int slot = 0; slot <= T + 1; ++slot) {
      const auto& v = per_k[slot];
      const int n = int(v.size());
      ErrorRow row{names[m], T, slot == T + 1 ? -1 : slot, std::numeric_limits<double>::quiet_NaN(), 0.0, n};
      if (n > 0) {
        row.error = compensated_sum(v) / n;
        if (n > 1) {
          std::vector<double> sq;
          for (double x : v) sq.push_back((x - row.error) * (x - row.error));
          row.stderr_ = std::sqrt(compensated_sum(sq) / (n - 1)) / std::sqrt(double(n));
        }
      }
      table.rows.push_back(std::move(row));
    }
    table.failures.push_back(std::move(fc));
  }
  return table;
}

TestSet draw_conditional_test(const std::vector<LatentTrajectory>& latent, const std::vector<Matrix>& R,
                              int per_time, Rng& rng) {
  const int c = int(latent.size());
  require(c >= 1 && int(R.size()) == c, "need one latent path and one R per class");
  const int T = int(latent.front().rows()) - 1;
  const auto d = latent.front().cols();
  TestSet t;
  std::vector<GaussianSampler> noise;
  for (const auto& r : R) noise.emplace_back(Vector::Zero(d), r);
  for (int k = 0; k <= T; ++k) {
    Matrix X(d, per_time);
    std::vector<int> y(per_time);
    for (int i = 0; i < per_time; ++i) {
      y[i] = i % c;
      X.col(i) = latent[y[i]].row(k).transpose() + noise[y[i]](rng);
    }
    t.X.push_back(std::move(X));
    t.labels.push_back(std::move(y));
  }
  return t;
}

TestSet draw_marginal_test(const LinearGaussianModel<double>& model, int horizon, int per_time, Rng& rng) {
  const int c = model.num_classes();
  TestSet t;
  for (int k = 0; k <= horizon; ++k) {
    std::vector<GaussianSampler> law;
    for (const auto& cls : model.classes) {
      const auto g = theoretical_moments(cls, k);
      law.emplace_back(g.mean, g.cov);
    }
    Matrix X(model.dim(), per_time);
    std::vector<int> y(per_time);
    for (int i = 0; i < per_time; ++i) {
      y[i] = i % c;
      X.col(i) = law[y[i]](rng);
    }
    t.X.push_back(std::move(X));
    t.labels.push_back(std::move(y));
  }
  return t;
}

TestSet draw_marginal_test(const NonlinearModel& model, int horizon, int per_time, Rng& rng) {
  const int c = model.num_classes();
  const int d = model.classes.front().dim;
  TestSet t;
  for (int k = 0; k <= horizon; ++k) {
    Matrix X(d, per_time);
    std::vector<int> y(per_time);
    for (int i = 0; i < per_time; ++i) {
      y[i] = i % c;
      const auto& m = model.classes[y[i]];
      Vector z = m.sample_initial(rng, m.theta);
      for (int s = 1; s <= k; ++s) z = m.transition(z, m.sample_noise(rng, m.theta), m.theta);
      X.col(i) = z + GaussianSampler(Vector::Zero(d), m.R)(rng);
    }
    t.X.push_back(std::move(X));
    t.labels.push_back(std::move(y));
  }
  return t;
}

TimeIndexedGaussianMoments<double> kalman_moments(const std::vector<SmootherOutput<double>>& fits,
                                                  const std::vector<Matrix>& R, CovarianceVariant variant) {
  require(fits.size() == R.size(), "need one R per class");
  TimeIndexedGaussianMoments<double> m;
  for (std::size_t j = 0; j < fits.size(); ++j) m.classes.push_back(moments_for_classification(fits[j], R[j], variant));
  return m;
}

std::vector<SmootherOutput<double>> fit_em_smoothers(const TimeLabeledDataset& train,
                                                     const LinearGaussianModel<double>& init, const EMConfig& em) {
  require(init.num_classes() == train.num_classes, "init and data disagree on the number of classes");
  std::vector<SmootherOutput<double>> out;
  for (int j = 0; j < train.num_classes; ++j) {
    const auto series = train.class_series(j);
    const auto fit = fit_em(series, init.classes[j], em);
    out.push_back(smooth(fit.model, series));
  }
  return out;
}

std::vector<SmootherOutput<double>> fit_gmm_smoothers(const TimeLabeledDataset& train,
                                                      const CandidateSet<double>& candidates, int horizon,
                                                      LinearGaussianModel<double>* selected,
                                                      Eigen::MatrixXi* counts) {
  std::vector<Matrix> unlabeled;
  for (int j = 0; j < train.num_classes; ++j) unlabeled.push_back(train.class_samples(j));
  const auto fit = fit_gmm_kalman(unlabeled, candidates, horizon);
  std::vector<SmootherOutput<double>> out;
  for (int j = 0; j < train.num_classes; ++j)
    out.push_back(smooth(fit.model.classes[j], regroup(unlabeled[j], fit.labels[j].labels, horizon)));
  if (selected) *selected = fit.model;
  if (counts) {
    *counts = Eigen::MatrixXi::Zero(train.num_classes, horizon + 1);
    for (int j = 0; j < train.num_classes; ++j)
      for (int l : fit.labels[j].labels) ++(*counts)(j, l);
  }
  return out;
}

TimeIndexedGaussianMoments<double> smc_class_moments(const TimeLabeledDataset& train, const NonlinearModel& model,
                                                     const ApfConfig& filter,
                                                     const ParticleEMConfig* particle_em_config,
                                                     std::uint64_t seed) {
  require(model.num_classes() == train.num_classes, "model and data disagree on the number of classes");
  TimeIndexedGaussianMoments<double> m;
  for (int j = 0; j < train.num_classes; ++j) {
    const auto& cls = model.classes[j];
    const auto series = train.class_series(j);
    const auto class_seed = substream_seed(seed, {std::uint64_t(Stream::particle), std::uint64_t(j)});
    ParticleSystem sys;
    if (particle_em_config) {
      auto cfg = *particle_em_config;
      cfg.filter = filter;
      sys = particle_em(series, cls, cls.theta, cfg, class_seed).system;
    } else {
      sys = particle_smooth(cls, series, filter, class_seed);
    }
    m.classes.push_back(smc_moments(sys, cls.R));
  }
  return m;
}

DiscriminantRule<double> pooled_baseline(const TimeLabeledDataset& train, BaselineKind kind,
                                         const ShrinkConfig& shrink) {
  std::vector<Matrix> blocks;
  for (int j = 0; j < train.num_classes; ++j) blocks.push_back(train.class_samples(j));
  return naive_baseline(blocks, kind, shrink);
}

std::vector<CurvePoint> example_curve(const AnalyticSpec& spec, int k_max) {
  require(k_max >= 0, "k_max must be nonnegative");
  std::vector<CurvePoint> out;
  for (double sigma : spec.sigmas) {
    auto p = spec.params;
    p.sigma = sigma;
    for (int k = 0; k <= k_max; ++k) out.push_back({sigma, k, example_errors(p, k)});
  }
  return out;
}

namespace {

ErrorTable analytic_table(const ExperimentConfig& cfg, int T) {
  const auto p = cfg.analytic.params;
  const auto methods = cfg.method_list();
  Generator gen = [p, T, n = cfg.test_size](std::uint64_t seed) {
    Rng rng = make_stream(seed, {std::uint64_t(Stream::test)});
    std::normal_distribution<double> z01;
    Trial t;
    t.train.dim = 1;
    t.train.num_classes = 2;
    t.train.horizon = T;
    for (int k = 0; k <= T; ++k) {
      const double ak = std::pow(p.a, k), s = example_sigma_k(p, k);
      Matrix X(1, n);
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) {
        y[i] = i % 2;
        X(0, i) = ak * (y[i] ? p.mu0_1 : p.mu0_0) + s * z01(rng);
      }
      t.test.X.push_back(std::move(X));
      t.test.labels.push_back(std::move(y));
    }
    return t;
  };
  Estimator e;
  e.methods = methods;
  e.build = [p, methods](const Trial&, std::uint64_t) {
    const double mid = 0.5 * (p.mu0_0 + p.mu0_1);
    std::vector<Classifier> out;
    for (const auto& m : methods) {
      if (m == "bayes_rule") out.push_back([p, mid](const Vector& x, int k) { return x[0] >= std::pow(p.a, k) * mid ? 1 : 0; });
      else out.push_back([mid](const Vector& x, int) { return x[0] >= mid ? 1 : 0; });
    }
    return out;
  };
  return monte_carlo_error({e}, gen, {T, cfg.runs, cfg.seed, cfg.threads});
}

ErrorTable linear_table(const ExperimentConfig& cfg, int T) {
  const auto truth = cfg.truth();
  const auto start = cfg.start();
  const auto counts = cfg.counts.build(truth.num_classes(), T);
  const auto methods = cfg.method_list();
  Generator gen = [truth, counts, T, n = cfg.test_size, draws = cfg.test_draws](std::uint64_t seed) {
    auto sim = simulate_linear(truth, counts, substream_seed(seed, {kTrainStream}));
    Rng rng = make_stream(seed, {std::uint64_t(Stream::test)});
    Trial t;
    t.test = draws == TestDraws::conditional ? draw_conditional_test(sim.latent, observation_noise(truth), n, rng)
                                             : draw_marginal_test(truth, T, n, rng);
    t.train = std::move(sim.data);
    t.latent = std::move(sim.latent);
    return t;
  };

  std::function<std::pair<TimeIndexedGaussianMoments<double>, Eigen::MatrixXi>(const Trial&, std::uint64_t)> fit;
  if (cfg.scenario == Scenario::linear_em) {
    fit = [start, em = cfg.em, variant = cfg.covariance](const Trial& t, std::uint64_t) {
      const auto smoothers = fit_em_smoothers(t.train, start, em);
      return std::make_pair(kalman_moments(smoothers, observation_noise(start), variant), t.train.counts());
    };
  } else {
    fit = [start, truth, T, cand = cfg.candidates, with_truth = cfg.include_truth,
           variant = cfg.covariance](const Trial& t, std::uint64_t seed) {
      auto set = generate_candidates(start, cand, seed);
      if (with_truth) set.candidates.push_back(truth);
      LinearGaussianModel<double> chosen;
      Eigen::MatrixXi n;
      const auto smoothers = fit_gmm_smoothers(t.train, set, T, &chosen, &n);
      return std::make_pair(kalman_moments(smoothers, observation_noise(chosen), variant), n);
    };
  }
  std::vector<Estimator> est;
  auto ti = time_indexed(methods, cfg, fit);
  if (!ti.methods.empty()) est.push_back(std::move(ti));
  auto nv = naive(methods, cfg.shrink);
  if (!nv.methods.empty()) est.push_back(std::move(nv));
  return monte_carlo_error(est, gen, {T, cfg.runs, cfg.seed, cfg.threads});
}

ErrorTable nonlinear_table(const ExperimentConfig& cfg, int T) {
  const auto truth = cfg.nonlinear_truth();
  const auto counts = cfg.counts.build(truth.num_classes(), T);
  const auto methods = cfg.method_list();
  Generator gen = [truth, counts, T, n = cfg.test_size, draws = cfg.test_draws](std::uint64_t seed) {
    auto sim = simulate_nonlinear(truth, counts, substream_seed(seed, {kTrainStream}));
    Rng rng = make_stream(seed, {std::uint64_t(Stream::test)});
    Trial t;
    t.test = draws == TestDraws::conditional ? draw_conditional_test(sim.latent, observation_noise(truth), n, rng)
                                             : draw_marginal_test(truth, T, n, rng);
    t.train = std::move(sim.data);
    t.latent = std::move(sim.latent);
    return t;
  };
  std::optional<ParticleEMConfig> pem;
  if (cfg.estimate_theta) pem = cfg.particle_em;
  auto fit = [truth, filter = cfg.filter, pem](const Trial& t, std::uint64_t seed) {
    auto moments = smc_class_moments(t.train, truth, filter, pem ? &*pem : nullptr, seed);
    return std::make_pair(std::move(moments), t.train.counts());
  };
  std::vector<Estimator> est;
  auto ti = time_indexed(methods, cfg, fit);
  if (!ti.methods.empty()) est.push_back(std::move(ti));
  auto nv = naive(methods, cfg.shrink);
  if (!nv.methods.empty()) est.push_back(std::move(nv));
  return monte_carlo_error(est, gen, {T, cfg.runs, cfg.seed, cfg.threads});
}

}  // namespace

ErrorTable run_scenario(const ExperimentConfig& config) {
  config.validate();
  ErrorTable out;
  for (int T : config.horizons) {
    switch (config.scenario) {
      case Scenario::analytic_example: out.append(analytic_table(config, T)); break;
      case Scenario::linear_em:
      case Scenario::linear_gmm: out.append(linear_table(config, T)); break;
      case Scenario::nonlinear_smc: out.append(nonlinear_table(config, T)); break;
    }
  }
  return out;
}

}  // namespace nsda::harness
