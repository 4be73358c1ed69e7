#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nsda/model.hpp"
#include "nsda/random.hpp"
#include "nsda/types.hpp"

namespace nsda {

struct Sample {
  Vector x;
  int label = 0;
  std::optional<int> time;
};

/// Feature vectors with class labels and (optionally) time indices in 0..T.
struct TimeLabeledDataset {
  int dim = 0;
  int num_classes = 0;
  int horizon = 0;
  std::vector<Sample> samples;

  void validate() const;

  bool fully_timed() const;

  /// n_k^j as a (num_classes x horizon+1) matrix; untimed samples are skipped.
  Eigen::MatrixXi counts() const;

  /// Timed samples of class j grouped by time (d x n_k per entry).
  ObservationSeries<double> class_series(int j) const;

  /// All samples of class j as columns, ignoring time.
  Matrix class_samples(int j) const;

  std::vector<int> class_sizes() const;
};

/// Latent states z_0..z_T of one class, one row per time.
using LatentTrajectory = Matrix;

struct SimulationResult {
  TimeLabeledDataset data;
  std::vector<LatentTrajectory> latent;
};

/// Draws a dataset from the linear drift model. `counts` is c x (T+1).
/// Every (class, time) pair uses its own substream, so the output depends
/// only on (model, counts, seed).
SimulationResult simulate_linear(const LinearGaussianModel<double>& model, const Eigen::MatrixXi& counts,
                                 std::uint64_t seed);

/// Per-class nonlinear drift model with additive Gaussian observation noise
///   z_k = f(z_{k-1}, w_k; theta),  x_{k,i} = z_k + v_{k,i},  v ~ N(0, R).
struct NonlinearClassModel {
  using TransitionFn = std::function<Vector(const Vector& z, const Vector& w, const Vector& theta)>;
  using NoiseSampler = std::function<Vector(Rng&, const Vector& theta)>;
  using TransitionDensity =
      std::function<double(const Vector& z_next, const Vector& z, const Vector& theta)>;
  using InitialSampler = std::function<Vector(Rng&, const Vector& theta)>;
  using InitialDensity = std::function<double(const Vector& z0, const Vector& theta)>;
  using DriftFn = std::function<Vector(const Vector& z, const Vector& theta)>;
  using CovFn = std::function<Matrix(const Vector& theta)>;

  int dim = 0;
  TransitionFn transition;
  NoiseSampler sample_noise;
  TransitionDensity transition_log_density;
  InitialSampler sample_initial;
  InitialDensity initial_log_density;
  Matrix R;
  Vector theta;
  /// Whether transition(z, 0, theta) is a meaningful one-step predictive
  /// characteristic; otherwise it is estimated by averaging noisy draws.
  bool zero_noise_available = true;

  /// Set when f(z, w) = drift(z) + w with w ~ N(0, noise_cov(theta)). Enables
  /// vectorized pairwise transition densities in the particle smoother.
  DriftFn drift;
  CovFn noise_cov;

  bool additive_gaussian() const { return bool(drift) && bool(noise_cov); }

  void validate() const;
};

struct NonlinearModel {
  std::vector<NonlinearClassModel> classes;
  int num_classes() const { return int(classes.size()); }
};

/// Builds a class model with additive Gaussian transition noise and a
/// Gaussian initial law. `noise_cov` defaults to the constant Q.
NonlinearClassModel make_additive_gaussian_class(int dim, NonlinearClassModel::DriftFn drift,
                                                 const Matrix& Q, const Vector& mu0, const Matrix& K0,
                                                 const Matrix& R, Vector theta,
                                                 NonlinearClassModel::CovFn noise_cov = {});

/// The linear drift class model expressed as a nonlinear model with
/// theta = vec(A) in row-major order.
NonlinearClassModel linear_as_nonlinear(const ClassModel<double>& m);

SimulationResult simulate_nonlinear(const NonlinearModel& model, const Eigen::MatrixXi& counts,
                                    std::uint64_t seed);

}  // namespace nsda
