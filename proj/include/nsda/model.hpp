#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nsda/linalg.hpp"
#include "nsda/types.hpp"

namespace nsda {

/// Parameters of one class of the linear drift model
///
///   z_{k+1} = A z_k + w_k,   w_k ~ N(0, Q)
///   x_{k,i} = z_k + v_{k,i}, v_{k,i} ~ N(0, R)
///   z_0 ~ N(mu0, K0)
///
/// The observation matrix is the identity.
template <typename Scalar>
struct ClassModel {
  Mat<Scalar> A;
  Mat<Scalar> Q;
  Mat<Scalar> R;
  Vec<Scalar> mu0;
  Mat<Scalar> K0;

  Eigen::Index dim() const { return mu0.size(); }

  /// Throws InvalidArgument naming the first offending block.
  void validate(double tol = 1e-10) const {
    const auto d = dim();
    require(d > 0, "model dimension must be positive");
    require(A.rows() == d && A.cols() == d, "A must be d x d");
    const std::pair<const char*, const Mat<Scalar>*> blocks[] = {{"Q", &Q}, {"R", &R}, {"K0", &K0}};
    for (const auto& [name, m] : blocks) {
      require(m->rows() == d && m->cols() == d, std::string(name) + " must be d x d");
      require(is_symmetric(*m, tol), std::string(name) + " is not symmetric");
      require(min_eigenvalue(*m) >= Scalar(-tol), std::string(name) + " is not positive semidefinite");
    }
  }

  template <typename Other>
  ClassModel<Other> cast() const {
    return {A.template cast<Other>(), Q.template cast<Other>(), R.template cast<Other>(),
            mu0.template cast<Other>(), K0.template cast<Other>()};
  }
};

/// One ClassModel per class; all share the dimension d.
template <typename Scalar>
struct LinearGaussianModel {
  std::vector<ClassModel<Scalar>> classes;

  int num_classes() const { return int(classes.size()); }
  Eigen::Index dim() const { return classes.empty() ? 0 : classes.front().dim(); }

  void validate(double tol = 1e-10) const {
    require(!classes.empty(), "model has no classes");
    for (std::size_t j = 0; j < classes.size(); ++j) {
      require(classes[j].dim() == dim(), "class " + std::to_string(j) + " dimension mismatch");
      try {
        classes[j].validate(tol);
      } catch (const InvalidArgument& e) {
        throw InvalidArgument("class " + std::to_string(j) + ": " + e.what());
      }
    }
  }
};

/// Marginal observation-space moments of class `m` at time k:
/// mean A^k mu0, covariance A^k K0 A'^k + sum_{i<k} A^i Q A'^i + R.
template <typename Scalar>
GaussianMoment<Scalar> theoretical_moments(const ClassModel<Scalar>& m, int k) {
  require(k >= 0, "time index must be nonnegative");
  Vec<Scalar> mean = m.mu0;
  Mat<Scalar> state_cov = m.K0;
  for (int i = 0; i < k; ++i) {
    mean = m.A * mean;
    state_cov = symmetrize(m.A * state_cov * m.A.transpose() + m.Q);
  }
  return {mean, symmetrize(state_cov + m.R)};
}

/// Two-class univariate example z_{k+1} = a z_k + w, x = z + v.
struct ExampleParams {
  double a = 0.9;
  double mu0_0 = 5.0;
  double mu0_1 = 10.0;
  double sigma = 1.0;    // initial-state standard deviation
  double sigma_q = 1.0;  // transition noise standard deviation
  double sigma_r = 1.0;  // observation noise standard deviation
};

struct ExampleErrors {
  double bayes = 0.0;
  double frozen = 0.0;  // error of the time-0 optimal threshold applied at time k
  double sigma_k = 0.0;
};

inline double example_sigma_k(const ExampleParams& p, int k) {
  const double a2k = std::pow(p.a * p.a, k);
  const double var = a2k * p.sigma * p.sigma +
                     (1.0 - a2k) / (1.0 - p.a * p.a) * p.sigma_q * p.sigma_q +
                     p.sigma_r * p.sigma_r;
  return std::sqrt(var);
}

inline ExampleErrors example_errors(const ExampleParams& p, int k) {
  require(p.a > 0.0 && p.a < 1.0, "example requires 0 < a < 1");
  require(p.sigma >= 0.0 && p.sigma_q >= 0.0 && p.sigma_r >= 0.0, "standard deviations must be >= 0");
  require(p.mu0_1 >= p.mu0_0, "example requires mu0_1 >= mu0_0");
  require(k >= 0, "time index must be nonnegative");
  const double ak = std::pow(p.a, k);
  const double s = example_sigma_k(p, k);
  ExampleErrors e;
  e.sigma_k = s;
  e.bayes = normal_cdf(-(ak / 2.0) * (p.mu0_1 - p.mu0_0) / s);
  e.frozen = 0.5 * normal_cdf(-((2.0 * ak - 1.0) * p.mu0_1 - p.mu0_0) / (2.0 * s)) +
             0.5 * normal_cdf(-(p.mu0_1 - (2.0 * ak - 1.0) * p.mu0_0) / (2.0 * s));
  return e;
}

}  // namespace nsda
