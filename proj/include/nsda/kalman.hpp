#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "nsda/linalg.hpp"
#include "nsda/model.hpp"
#include "nsda/types.hpp"

namespace nsda {

/// Covariance plugged into the per-time class-conditional Gaussian:
/// prediction -> P_{k|k-1} + R, smoothed -> P_{k|T} + R.
enum class CovarianceVariant { prediction, smoothed };

/// Forward/backward quantities of the multi-measurement Kalman smoother for
/// one class, indexed by k = 0..T.
///
/// The prior N(mu0, K0) plays the role of the time-0 prediction, so
/// z_pred[0] = mu0 and P_pred[0] = K0; observations at time 0 update it.
template <typename Scalar>
struct SmootherOutput {
  std::vector<Vec<Scalar>> z_pred, z_filt, z_smooth;
  std::vector<Mat<Scalar>> P_pred, P_filt, P_smooth;
  /// Smoother gains L_k for k = 0..T-1.
  std::vector<Mat<Scalar>> gain;
  /// V_{k,k-1|T} for k = 1..T; entry 0 is left empty.
  std::vector<Mat<Scalar>> lag_cov;
  /// Composite same-time update map J_k = (I - K_{k,n_k}) ... (I - K_{k,1}).
  std::vector<Mat<Scalar>> update_factor;
  Scalar loglik = 0;
  bool has_smooth = false;
  bool has_lag = false;

  int horizon() const { return int(z_pred.size()) - 1; }
};

namespace detail {

template <typename Scalar>
void check_series(const ClassModel<Scalar>& model, const ObservationSeries<Scalar>& series) {
  require(!series.empty(), "observation series must cover at least time 0");
  for (std::size_t k = 0; k < series.size(); ++k) {
    require(series[k].cols() == 0 || series[k].rows() == model.dim(),
            "observation dimension differs from model at time " + std::to_string(k));
  }
}

}  // namespace detail

/// Processes the n columns of `obs` one at a time against (z, P), using the
/// Joseph-form covariance update. Returns the summed innovation
/// log-density and writes the composite update factor to `factor`.
template <typename Scalar>
Scalar sequential_update(Vec<Scalar>& z, Mat<Scalar>& P, const Mat<Scalar>& obs, const Mat<Scalar>& R,
                         Mat<Scalar>& factor, int k) {
  const auto d = z.size();
  const Mat<Scalar> I = Mat<Scalar>::Identity(d, d);
  factor = I;
  Scalar ll = 0;
  const Scalar log2pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  for (Eigen::Index i = 0; i < obs.cols(); ++i) {
    const Mat<Scalar> S = symmetrize(P + R);
    auto fS = SpdFactor<Scalar>::try_factor(S);
    if (!fS) {
      throw NumericalError("innovation covariance singular at k=" + std::to_string(k) +
                           ", i=" + std::to_string(i));
    }
    const Vec<Scalar> innov = obs.col(i) - z;
    ll += Scalar(-0.5) * (Scalar(d) * log2pi + fS->log_det() + fS->quad(innov));
    const Mat<Scalar> K = fS->solve(P).transpose();  // P S^{-1}
    const Mat<Scalar> IK = I - K;
    z += K * innov;
    P = symmetrize(IK * P * IK.transpose() + K * R * K.transpose());
    factor = IK * factor;
  }
  return ll;
}

/// Forward filter: one prediction per time step followed by sequential
/// updates with every observation at that time. Fills the pred/filt fields
/// and the marginal log-likelihood.
template <typename Scalar>
SmootherOutput<Scalar> forward_pass(const ClassModel<Scalar>& model, const ObservationSeries<Scalar>& series) {
  detail::check_series(model, series);
  const int T = int(series.size()) - 1;
  SmootherOutput<Scalar> out;
  out.z_pred.resize(T + 1);
  out.P_pred.resize(T + 1);
  out.z_filt.resize(T + 1);
  out.P_filt.resize(T + 1);
  out.update_factor.resize(T + 1);

  Vec<Scalar> z = model.mu0;
  Mat<Scalar> P = symmetrize(model.K0);
  for (int k = 0; k <= T; ++k) {
    if (k > 0) {
      z = model.A * z;
      P = symmetrize(model.A * P * model.A.transpose() + model.Q);
    }
    out.z_pred[k] = z;
    out.P_pred[k] = P;
    out.loglik += sequential_update(z, P, series[k], model.R, out.update_factor[k], k);
    out.z_filt[k] = z;
    out.P_filt[k] = P;
  }
  return out;
}

/// Rauch-Tung-Striebel backward pass over a completed forward pass.
template <typename Scalar>
SmootherOutput<Scalar> backward_pass(const ClassModel<Scalar>& model, SmootherOutput<Scalar> out) {
  const int T = out.horizon();
  require(T >= 0 && int(out.z_filt.size()) == T + 1, "forward pass incomplete");
  out.z_smooth.assign(T + 1, Vec<Scalar>());
  out.P_smooth.assign(T + 1, Mat<Scalar>());
  out.gain.assign(std::max(T, 0), Mat<Scalar>());
  out.z_smooth[T] = out.z_filt[T];
  out.P_smooth[T] = out.P_filt[T];
  const auto d = model.dim();
  for (int k = T - 1; k >= 0; --k) {
    const Mat<Scalar>& Pp = out.P_pred[k + 1];
    Mat<Scalar> L;
    if (Pp.cwiseAbs().maxCoeff() == Scalar(0)) {
      // Deterministic one-step prediction: nothing to propagate back.
      L = Mat<Scalar>::Zero(d, d);
    } else {
      auto f = SpdFactor<Scalar>::try_factor(Pp);
      if (!f) throw NumericalError("predicted covariance singular at k=" + std::to_string(k + 1));
      // L = P_{k|k} A' P_{k+1|k}^{-1}
      L = f->solve(model.A * out.P_filt[k]).transpose();
    }
    out.z_smooth[k] = out.z_filt[k] + L * (out.z_smooth[k + 1] - out.z_pred[k + 1]);
    out.P_smooth[k] = symmetrize(out.P_filt[k] + L * (out.P_smooth[k + 1] - Pp) * L.transpose());
    out.gain[k] = std::move(L);
  }
  out.has_smooth = true;
  return out;
}

/// Lag-one smoothed cross-covariances V_{k,k-1|T} = Cov(z_k, z_{k-1} | all data).
template <typename Scalar>
SmootherOutput<Scalar> lag_one_cross_covariances(const ClassModel<Scalar>& model, SmootherOutput<Scalar> out) {
  require(out.has_smooth, "backward pass required before lag-one covariances");
  const int T = out.horizon();
  out.lag_cov.assign(T + 1, Mat<Scalar>());
  if (T >= 1) {
    out.lag_cov[T] = out.update_factor[T] * model.A * out.P_filt[T - 1];
    for (int k = T - 1; k >= 1; --k) {
      out.lag_cov[k] = out.P_filt[k] * out.gain[k - 1].transpose() +
                       out.gain[k] * (out.lag_cov[k + 1] - model.A * out.P_filt[k]) *
                           out.gain[k - 1].transpose();
    }
  }
  out.has_lag = true;
  return out;
}

/// Forward pass, backward pass and lag-one covariances.
template <typename Scalar>
SmootherOutput<Scalar> smooth(const ClassModel<Scalar>& model, const ObservationSeries<Scalar>& series) {
  return lag_one_cross_covariances(model, backward_pass(model, forward_pass(model, series)));
}

/// Residual-based observation noise estimate
///   (1/N) sum (x - z_{k|T})(x - z_{k|T})' - (1/N) sum_k n_k P_{k|T},
/// projected onto the PSD cone.
template <typename Scalar>
Mat<Scalar> estimate_R(const ObservationSeries<Scalar>& series, const SmootherOutput<Scalar>& out) {
  require(out.has_smooth, "estimate_R needs smoothed moments");
  require(int(series.size()) == out.horizon() + 1, "series and smoother horizon differ");
  const auto d = out.z_smooth.front().size();
  Mat<Scalar> acc = Mat<Scalar>::Zero(d, d);
  Eigen::Index N = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto n = series[k].cols();
    if (n == 0) continue;
    const Mat<Scalar> resid = series[k].colwise() - out.z_smooth[k];
    acc += resid * resid.transpose() - Scalar(n) * out.P_smooth[k];
    N += n;
  }
  require(N > 0, "estimate_R needs at least one observation");
  return psd_project(Mat<Scalar>(acc / Scalar(N)), Scalar(0));
}

/// Per-time plug-in moments: mean z_{k|T}, covariance P_{k|k-1} + R or
/// P_{k|T} + R depending on `variant`.
template <typename Scalar>
MomentSequence<Scalar> moments_for_classification(const SmootherOutput<Scalar>& out, const Mat<Scalar>& R,
                                                  CovarianceVariant variant = CovarianceVariant::prediction) {
  require(out.has_smooth, "moments need smoothed means");
  MomentSequence<Scalar> m(out.horizon() + 1);
  for (int k = 0; k <= out.horizon(); ++k) {
    const Mat<Scalar>& P = variant == CovarianceVariant::prediction ? out.P_pred[k] : out.P_smooth[k];
    m[k] = {out.z_smooth[k], psd_project(Mat<Scalar>(P + R), Scalar(0))};
  }
  return m;
}

}  // namespace nsda
