#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "nsda/types.hpp"

namespace nsda {

/// Largest condition number accepted when factorizing a covariance.
inline constexpr double kMaxCondition = 1e12;

template <typename Derived>
auto symmetrize(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return Mat<Scalar>(Scalar(0.5) * (m + m.transpose()));
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return ((m - m.transpose()).cwiseAbs().maxCoeff() <= tol) || m.size() == 0;
}

template <typename Derived>
bool is_symmetric_psd(const Eigen::MatrixBase<Derived>& m, double tol) {
  return is_symmetric(m, tol) && min_eigenvalue(m) >= -tol;
}

/// Projects a symmetric matrix onto {M : M >= floor * I} by clamping
/// eigenvalues from below. Idempotent.
template <typename Derived>
auto psd_project(const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar floor = 0) {
  using Scalar = typename Derived::Scalar;
  using MatS = Mat<Scalar>;
  MatS sym = symmetrize(m);
  if (sym.size() == 0) return sym;
  Eigen::SelfAdjointEigenSolver<MatS> es(sym);
  if (es.eigenvalues().minCoeff() >= floor) return sym;
  Vec<Scalar> clamped = es.eigenvalues().cwiseMax(floor);
  return symmetrize(es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose());
}

/// Cholesky factor of a symmetric positive-definite matrix that refuses
/// ill-conditioned input (condition number above kMaxCondition).
template <typename Scalar>
class SpdFactor {
 public:
  /// Returns std::nullopt when the matrix is not safely positive definite.
  static std::optional<SpdFactor> try_factor(const Mat<Scalar>& m,
                                             double max_condition = kMaxCondition) {
    const Mat<Scalar> sym = symmetrize(m);
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(sym, Eigen::EigenvaluesOnly);
    const Scalar lo = es.eigenvalues().minCoeff();
    const Scalar hi = es.eigenvalues().maxCoeff();
    if (!(lo > Scalar(0)) || !(hi / lo <= Scalar(max_condition)) || !std::isfinite(double(hi))) {
      return std::nullopt;
    }
    SpdFactor f;
    f.llt_.compute(sym);
    if (f.llt_.info() != Eigen::Success) return std::nullopt;
    return f;
  }

  static SpdFactor factor(const Mat<Scalar>& m, const std::string& context) {
    auto f = try_factor(m);
    if (!f) throw NumericalError("singular or ill-conditioned matrix: " + context);
    return *f;
  }

  template <typename Rhs>
  Mat<Scalar> solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    return llt_.solve(rhs);
  }

  Mat<Scalar> inverse() const {
    const auto n = llt_.matrixLLT().rows();
    return symmetrize(llt_.solve(Mat<Scalar>::Identity(n, n)));
  }

  Scalar log_det() const {
    return Scalar(2) * llt_.matrixLLT().diagonal().array().log().sum();
  }

  /// Squared Mahalanobis norm r' M^{-1} r.
  template <typename Derived>
  Scalar quad(const Eigen::MatrixBase<Derived>& r) const {
    return llt_.matrixL().solve(r).squaredNorm();
  }

  /// L^{-1} r for the lower Cholesky factor L, columnwise.
  template <typename Derived>
  Mat<Scalar> whiten(const Eigen::MatrixBase<Derived>& r) const {
    return llt_.matrixL().solve(r);
  }

  Eigen::Index dim() const { return llt_.matrixLLT().rows(); }

 private:
  Eigen::LLT<Mat<Scalar>> llt_;
};

/// log N(x; mean, cov) given a factor of cov.
template <typename Scalar, typename DX, typename DM>
Scalar gaussian_logpdf(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& mean,
                       const SpdFactor<Scalar>& cov) {
  const Scalar d = Scalar(cov.dim());
  return Scalar(-0.5) * (d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + cov.log_det() +
                         cov.quad(x - mean));
}

/// Standard normal CDF via erfc, accurate in both tails.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Largest absolute entry of a - b.
template <typename DA, typename DB>
double max_abs_diff(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.size() == 0) return 0.0;
  return double((a - b).cwiseAbs().maxCoeff());
}

}  // namespace nsda
