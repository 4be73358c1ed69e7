#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nsda {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Vec<double>;
using Matrix = Mat<double>;

/// Observations of one class, indexed by time 0..T. Entry k is a d x n_k
/// matrix whose columns are the samples observed at time k.
template <typename Scalar>
using ObservationSeries = std::vector<Mat<Scalar>>;

/// Thrown when a factorization or a probability normalization breaks down.
/// The message names the offending time/observation indices.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for inconsistent shapes or parameter values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
struct GaussianMoment {
  Vec<Scalar> mean;
  Mat<Scalar> cov;
};

/// Per-time (mean, covariance) pairs of one class.
template <typename Scalar>
using MomentSequence = std::vector<GaussianMoment<Scalar>>;

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace nsda
