#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsda/dataset.hpp"
#include "nsda/discriminant.hpp"
#include "nsda/em.hpp"
#include "nsda/gmm.hpp"
#include "nsda/kalman.hpp"
#include "nsda/model.hpp"
#include "nsda/particle.hpp"

namespace nsda::harness {

enum class Scenario { analytic_example, linear_em, linear_gmm, nonlinear_smc };

/// conditional: x = z_k + v around the run's own latent state.
/// marginal: x drawn from the model's marginal law at k.
enum class TestDraws { conditional, marginal };

/// Per-class, per-time training counts.
struct CountSpec {
  int per_time = 20;
  std::vector<int> per_class;  // overrides per_time when nonempty
  struct Override {
    int cls = -1;  // -1 = every class
    int time = 0;
    int n = 0;
  };
  std::vector<Override> overrides;

  Eigen::MatrixXi build(int num_classes, int horizon) const;
};

struct NonlinearSpec {
  double observation_noise = 0.01;
  double transition_noise = 0.02;
  double step = 1.2;
};

struct AnalyticSpec {
  ExampleParams params;
  std::vector<double> sigmas{0.5, 1.0, 2.0};  // curve only
};

struct ExperimentConfig {
  Scenario scenario = Scenario::linear_em;
  std::optional<LinearGaussianModel<double>> model;  // linear truth; table1_model() when unset
  std::optional<LinearGaussianModel<double>> init;   // EM / GMM anchor; table2_init(truth) when unset
  NonlinearSpec nonlinear;
  AnalyticSpec analytic;
  std::vector<int> horizons{10};
  CountSpec counts;
  int runs = 200;
  int test_size = 1000;  // per time, split evenly over classes
  std::uint64_t seed = 1;
  int threads = 1;
  EMConfig em;
  CandidateConfig candidates;
  bool include_truth = false;  // append the generating model to the GMM candidates
  ApfConfig filter;
  bool estimate_theta = false;  // particle-EM before smoothing
  ParticleEMConfig particle_em;
  CovarianceVariant covariance = CovarianceVariant::prediction;
  Pooling pooling = Pooling::equal_weight;
  ShrinkConfig shrink;
  TestDraws test_draws = TestDraws::conditional;
  std::vector<std::string> methods;  // empty selects the scenario default

  /// Throws ConfigError naming the offending field.
  void validate() const;

  LinearGaussianModel<double> truth() const;
  LinearGaussianModel<double> start() const;
  NonlinearModel nonlinear_truth() const;
  std::vector<std::string> method_list() const;
};

class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& path, const std::string& what) : InvalidArgument(path + ": " + what) {}
};

const char* to_string(Scenario s);
std::vector<std::string> default_methods(Scenario s);

struct ErrorRow {
  std::string method;
  int T = 0;
  int k = 0;  // -1 is the average over k = 0..T
  double error = 0.0;
  double stderr_ = 0.0;
  int runs = 0;
};

struct FailureCount {
  std::string method;
  int T = 0;
  int failures = 0;
  std::string first_error;
};

/// Per-run average over k; NaN for a failed run.
struct RunRecord {
  std::string method;
  int T = 0;
  int run = 0;
  double average = 0.0;
};

struct ErrorTable {
  std::vector<ErrorRow> rows;
  std::vector<FailureCount> failures;
  std::vector<RunRecord> run_records;
  std::vector<std::string> warnings;

  void append(const ErrorTable& other);
  /// Row for (method, T, k); throws if absent.
  const ErrorRow& at(const std::string& method, int T, int k) const;
};

/// Labeled test points per time: X[k] is d x m_k, labels[k] has m_k entries.
struct TestSet {
  std::vector<Matrix> X;
  std::vector<std::vector<int>> labels;
};

struct Trial {
  TimeLabeledDataset train;
  std::vector<LatentTrajectory> latent;  // empty when not simulated
  TestSet test;
};

using Classifier = std::function<int(const Vector& x, int k)>;

/// Fits once per run and yields one classifier per listed method.
struct Estimator {
  std::vector<std::string> methods;
  std::function<std::vector<Classifier>(const Trial&, std::uint64_t seed)> build;
};

using Generator = std::function<Trial(std::uint64_t seed)>;

struct MonteCarloConfig {
  int horizon = 0;
  int runs = 1;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Per run r: trial = generator(seed_r), each estimator is fitted on the
/// trial and scored on its test set. Failing estimators are excluded for
/// that run and counted. Output is independent of the thread count.
ErrorTable monte_carlo_error(const std::vector<Estimator>& estimators, const Generator& generator,
                             const MonteCarloConfig& config);

/// Every run of every horizon in `config`.
ErrorTable run_scenario(const ExperimentConfig& config);

/// Per-run seed shared by the generator and the estimators of run r.
std::uint64_t run_seed(std::uint64_t seed, int horizon, int run);

// Building blocks shared by the scenarios and the CLI.
TestSet draw_conditional_test(const std::vector<LatentTrajectory>& latent, const std::vector<Matrix>& R,
                              int per_time, Rng& rng);
TestSet draw_marginal_test(const LinearGaussianModel<double>& model, int horizon, int per_time, Rng& rng);
TestSet draw_marginal_test(const NonlinearModel& model, int horizon, int per_time, Rng& rng);

/// Time-indexed moments from per-class Kalman fits.
TimeIndexedGaussianMoments<double> kalman_moments(const std::vector<SmootherOutput<double>>& fits,
                                                  const std::vector<Matrix>& R, CovarianceVariant variant);

/// Per-class EM fits on the timed samples, then smoothing at the fitted parameters.
std::vector<SmootherOutput<double>> fit_em_smoothers(const TimeLabeledDataset& train,
                                                     const LinearGaussianModel<double>& init, const EMConfig& em);

/// GMM-Kalman fit on the samples with their times removed; every class is
/// re-smoothed over 0..horizon. `counts` receives the recovered per-time counts.
std::vector<SmootherOutput<double>> fit_gmm_smoothers(const TimeLabeledDataset& train,
                                                      const CandidateSet<double>& candidates, int horizon,
                                                      LinearGaussianModel<double>* selected = nullptr,
                                                      Eigen::MatrixXi* counts = nullptr);

/// Per-class particle smoothing (after particle-EM when requested).
TimeIndexedGaussianMoments<double> smc_class_moments(const TimeLabeledDataset& train, const NonlinearModel& model,
                                                     const ApfConfig& filter,
                                                     const ParticleEMConfig* particle_em, std::uint64_t seed);

/// Time-agnostic baseline from all samples regardless of time.
DiscriminantRule<double> pooled_baseline(const TimeLabeledDataset& train, BaselineKind kind,
                                         const ShrinkConfig& shrink);

struct CurvePoint {
  double sigma = 0.0;
  int k = 0;
  ExampleErrors errors;
};

std::vector<CurvePoint> example_curve(const AnalyticSpec& spec, int k_max);

/// Neumaier-compensated sum.
double compensated_sum(const std::vector<double>& v);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(const std::string& s);

}  // namespace nsda::harness
