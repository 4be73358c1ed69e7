#pragma once

#include <string>
#include <vector>

#include "nsda/kalman.hpp"
#include "nsda/linalg.hpp"
#include "nsda/model.hpp"

namespace nsda {

/// Which parameter blocks the M-step re-estimates. The defaults treat the
/// initial mean and the dynamics matrix as unknown and everything else as
/// known.
struct EMFlags {
  bool A = true;
  bool Q = false;
  bool init_mean = true;
  bool init_cov = false;
  bool R = false;

  static EMFlags all() { return {true, true, true, true, true}; }
  static EMFlags none() { return {false, false, false, false, false}; }
};

struct EMConfig {
  EMFlags estimate;
  double tol = 1e-6;  // max-abs parameter change
  int max_iter = 500;
  double psd_floor = 0.0;

  void validate() const {
    require(tol > 0.0, "EM tolerance must be positive");
    require(max_iter >= 1, "EM needs at least one iteration");
    require(psd_floor >= 0.0, "PSD floor must be nonnegative");
  }
};

/// Smoothed first and second moments of the latent path, k = 0..T.
template <typename Scalar>
struct SufficientStats {
  std::vector<Vec<Scalar>> z;      // E[z_k | data]
  std::vector<Mat<Scalar>> V;      // Cov(z_k | data)
  std::vector<Mat<Scalar>> V_lag;  // Cov(z_k, z_{k-1} | data), k >= 1
  std::vector<Mat<Scalar>> P;      // E[z_k z_k' | data]
  std::vector<Mat<Scalar>> P_lag;  // E[z_k z_{k-1}' | data], k >= 1
  Scalar loglik = 0;               // observed-data log-likelihood at the tuning parameters

  int horizon() const { return int(z.size()) - 1; }
};

template <typename Scalar>
SufficientStats<Scalar> stats_from_smoother(const SmootherOutput<Scalar>& out) {
  require(out.has_lag, "sufficient statistics need lag-one covariances");
  const int T = out.horizon();
  SufficientStats<Scalar> s;
  s.z = out.z_smooth;
  s.V = out.P_smooth;
  s.V_lag = out.lag_cov;
  s.P.resize(T + 1);
  s.P_lag.resize(T + 1);
  for (int k = 0; k <= T; ++k) {
    s.P[k] = s.V[k] + s.z[k] * s.z[k].transpose();
    if (k >= 1) s.P_lag[k] = s.V_lag[k] + s.z[k] * s.z[k - 1].transpose();
  }
  s.loglik = out.loglik;
  return s;
}

/// E-step: run the smoother tuned to `theta` and collect its moments.
template <typename Scalar>
SufficientStats<Scalar> e_step(const ClassModel<Scalar>& theta, const ObservationSeries<Scalar>& series) {
  return stats_from_smoother(smooth(theta, series));
}

template <typename Scalar>
struct MStepResult {
  ClassModel<Scalar> model;
  bool ridge_applied = false;  // sum of P_{k-1|T} was singular
};

/// Closed-form maximizer of the expected complete-data log-likelihood. Blocks
/// not flagged in `config.estimate` are copied from `current`.
template <typename Scalar>
MStepResult<Scalar> m_step(const SufficientStats<Scalar>& stats, const ObservationSeries<Scalar>& series,
                           const ClassModel<Scalar>& current, const EMConfig& config) {
  const int T = stats.horizon();
  require(int(series.size()) == T + 1, "series and statistics horizon differ");
  const auto d = current.dim();
  const Scalar floor = Scalar(config.psd_floor);
  MStepResult<Scalar> res{current, false};
  ClassModel<Scalar>& next = res.model;

  if (T >= 1 && (config.estimate.A || config.estimate.Q)) {
    Mat<Scalar> S_lag = Mat<Scalar>::Zero(d, d);   // sum P_{k,k-1}
    Mat<Scalar> S_prev = Mat<Scalar>::Zero(d, d);  // sum P_{k-1}
    Mat<Scalar> S_curr = Mat<Scalar>::Zero(d, d);  // sum P_k
    for (int k = 1; k <= T; ++k) {
      S_lag += stats.P_lag[k];
      S_prev += stats.P[k - 1];
      S_curr += stats.P[k];
    }
    if (config.estimate.A) {
      auto f = SpdFactor<Scalar>::try_factor(S_prev);
      if (!f) {
        res.ridge_applied = true;
        f = SpdFactor<Scalar>::try_factor(Mat<Scalar>(S_prev + Scalar(1e-10) * Mat<Scalar>::Identity(d, d)),
                                          1e300);
        if (!f) throw NumericalError("sum of smoothed second moments is singular");
      }
      // A = S_lag S_prev^{-1}
      next.A = f->solve(S_lag.transpose()).transpose();
    }
    if (config.estimate.Q) {
      const Mat<Scalar>& A = next.A;
      const Mat<Scalar> q = (S_curr - A * S_lag.transpose() - S_lag * A.transpose() + A * S_prev * A.transpose()) /
                            Scalar(T);
      next.Q = psd_project(q, floor);
    }
  }
  if (config.estimate.init_mean) next.mu0 = stats.z[0];
  if (config.estimate.init_cov) {
    next.K0 = psd_project(Mat<Scalar>(stats.P[0] - stats.z[0] * stats.z[0].transpose()), floor);
  }
  if (config.estimate.R) {
    Mat<Scalar> acc = Mat<Scalar>::Zero(d, d);
    Eigen::Index N = 0;
    for (int k = 0; k <= T; ++k) {
      const auto n = series[k].cols();
      if (n == 0) continue;
      const Mat<Scalar> resid = series[k].colwise() - stats.z[k];
      acc += resid * resid.transpose() + Scalar(n) * stats.V[k];
      N += n;
    }
    if (N > 0) next.R = psd_project(Mat<Scalar>(acc / Scalar(N)), floor);
  }
  return res;
}

/// Largest absolute change over the parameter blocks selected by `flags`.
template <typename Scalar>
double max_param_change(const ClassModel<Scalar>& a, const ClassModel<Scalar>& b, const EMFlags& flags) {
  double m = 0.0;
  if (flags.A) m = std::max(m, max_abs_diff(a.A, b.A));
  if (flags.Q) m = std::max(m, max_abs_diff(a.Q, b.Q));
  if (flags.init_mean) m = std::max(m, max_abs_diff(a.mu0, b.mu0));
  if (flags.init_cov) m = std::max(m, max_abs_diff(a.K0, b.K0));
  if (flags.R) m = std::max(m, max_abs_diff(a.R, b.R));
  return m;
}

template <typename Scalar>
struct EMIteration {
  int iteration = 0;
  ClassModel<Scalar> theta;  // parameters entering this iteration
  Scalar loglik = 0;         // observed-data log-likelihood of `theta`
  double delta = 0.0;        // max-abs change produced by this iteration's M-step
};

template <typename Scalar>
struct EMTrace {
  std::vector<EMIteration<Scalar>> iterations;
  Scalar final_loglik = 0;
  bool converged = false;
  bool ridge_applied = false;

  /// Log-likelihoods of every iterate, including the returned one.
  std::vector<Scalar> loglik_path() const {
    std::vector<Scalar> p;
    for (const auto& it : iterations) p.push_back(it.loglik);
    p.push_back(final_loglik);
    return p;
  }
};

template <typename Scalar>
struct EMFit {
  ClassModel<Scalar> model;
  EMTrace<Scalar> trace;
};

/// Alternates E- and M-steps until the max-abs parameter change drops below
/// config.tol or config.max_iter iterations have run.
template <typename Scalar>
EMFit<Scalar> fit_em(const ObservationSeries<Scalar>& series, const ClassModel<Scalar>& init,
                     const EMConfig& config = {}) {
  config.validate();
  init.validate();
  EMFit<Scalar> fit{init, {}};
  int n = 0;
  try {
    for (; n < config.max_iter; ++n) {
      const auto stats = e_step(fit.model, series);
      auto step = m_step(stats, series, fit.model, config);
      const double delta = max_param_change(step.model, fit.model, config.estimate);
      fit.trace.iterations.push_back({n, fit.model, stats.loglik, delta});
      fit.trace.ridge_applied |= step.ridge_applied;
      fit.model = std::move(step.model);
      if (delta < config.tol) {
        fit.trace.converged = true;
        break;
      }
    }
    fit.trace.final_loglik = forward_pass(fit.model, series).loglik;
  } catch (const NumericalError& e) {
    throw NumericalError("EM iteration " + std::to_string(n) + ": " + e.what());
  }
  return fit;
}

}  // namespace nsda
