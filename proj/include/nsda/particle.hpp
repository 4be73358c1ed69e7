#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nsda/dataset.hpp"
#include "nsda/types.hpp"

namespace nsda {

/// Weighted particle approximation of one class's latent path, k = 0..T.
struct ParticleSystem {
  std::vector<Matrix> particles;          // d x N per k
  std::vector<Vector> forward_weights;    // normalized, per k
  std::vector<Vector> smoothed_weights;   // normalized, per k; empty before smoothing
  std::vector<std::vector<int>> ancestors;  // per k >= 1, index into particles[k-1]

  int horizon() const { return int(particles.size()) - 1; }
  int size() const { return particles.empty() ? 0 : int(particles.front().cols()); }
  int dim() const { return particles.empty() ? 0 : int(particles.front().rows()); }
  bool smoothed() const { return !smoothed_weights.empty(); }

  /// Throws unless every weight vector is finite, nonnegative and sums to 1
  /// within `tol`, and particle arrays are finite with consistent shapes.
  void check(double tol = 1e-12) const;
};

/// 1 / sum w_i^2.
double effective_sample_size(const Vector& w);

/// Normalizes log-weights with max subtraction. Throws if all are -inf.
Vector normalize_log_weights(const Vector& logw, const std::string& context);

/// Systematic resampling: N ancestor indices from normalized weights `w`
/// using a single uniform offset u in [0, 1/N).
std::vector<int> systematic_resample(const Vector& w, int N, double u);

struct ApfConfig {
  int N = 1000;
  int lookahead_draws = 16;  // used when the model has no zero-noise transition
};

/// Auxiliary particle filter with the prior as proposal and look-ahead
/// first-stage weights. Time-0 particles come from the initial law and are
/// weighted by the time-0 observations.
ParticleSystem apf_forward(const NonlinearClassModel& model, const ObservationSeries<double>& series,
                           const ApfConfig& config, std::uint64_t seed);

/// Forward-filter backward-smoother reweighting, O(N^2) per step.
ParticleSystem ffbsm_backward(const NonlinearClassModel& model, ParticleSystem system);

inline ParticleSystem particle_smooth(const NonlinearClassModel& model, const ObservationSeries<double>& series,
                                      const ApfConfig& config, std::uint64_t seed) {
  return ffbsm_backward(model, apf_forward(model, series, config, seed));
}

struct PairWeight {
  int i;     // particle at k
  int s;     // particle at k + 1
  double w;  // joint smoothing weight of (z_{k,i}, z_{k+1,s})
};

/// Joint smoothing weights for consecutive times, k = 0..T-1.
/// successor_sums[k].col(i) = sum_s w_{k,is} z_{k+1,s}, which is all the
/// additive-Gaussian Q function needs. Sparse pairs (entries below `prune`
/// dropped) are kept when requested.
struct PairwiseWeights {
  std::vector<Matrix> successor_sums;
  std::vector<std::vector<PairWeight>> per_time;
  bool has_pairs = false;
};

PairwiseWeights pairwise_weights(const NonlinearClassModel& model, const ParticleSystem& system,
                                 bool keep_pairs, double prune = 1e-14);

/// Smoothed per-time observation moments: weighted mean and N/(N-1)-scaled
/// weighted covariance of the particles, plus R.
MomentSequence<double> smc_moments(const ParticleSystem& system, const Matrix& R);

/// Particle approximation of the expected complete-data log-likelihood at
/// `theta`, using smoothing weights computed under the system's parameters.
double q_function(const NonlinearClassModel& model, const Vector& theta, const ParticleSystem& system,
                  const PairwiseWeights& pairs, const ObservationSeries<double>& series);

/// Square block of theta stored row-major from `offset`, kept PSD.
struct PsdBlock {
  int offset = 0;
  int dim = 0;
};

struct ParticleEMConfig {
  ApfConfig filter;
  double initial_step = 1.0;
  double backtrack = 0.5;
  int max_line_search = 30;
  double armijo = 1e-4;
  int max_ascent_steps = 25;  // gradient steps per M-step
  double fd_step = 1e-5;      // relative central-difference step
  double tol = 1e-4;          // relative Q change or max-abs parameter change
  int max_iter = 30;
  std::vector<bool> free;  // optimized entries of theta; empty means all
  std::vector<PsdBlock> psd_blocks;

  void validate(int theta_size) const;
};

struct ParticleEMIteration {
  int iteration = 0;
  Vector theta;  // parameters entering the iteration
  double q_start = 0.0;
  double q_end = 0.0;
  int accepted_steps = 0;
};

struct ParticleEMTrace {
  std::vector<ParticleEMIteration> iterations;
  bool converged = false;
  bool line_search_failed = false;
};

struct ParticleEMResult {
  Vector theta;
  ParticleEMTrace trace;
  ParticleSystem system;  // smoother rerun at theta
};

ParticleEMResult particle_em(const ObservationSeries<double>& series, const NonlinearClassModel& model,
                             const Vector& theta0, const ParticleEMConfig& config, std::uint64_t seed);

}  // namespace nsda
