#pragma once

// Dense joint-Gaussian reference for the linear drift model: stacks every
// latent state and every observation into one normal vector and conditions
// on subsets of the observations directly. Independent of the recursive
// filter/smoother code paths.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "nsda/model.hpp"

namespace oracle {

using nsda::Matrix;
using nsda::Vector;

class JointGaussian {
 public:
  JointGaussian(const nsda::ClassModel<double>& m, const nsda::ObservationSeries<double>& series)
      : d_(int(m.dim())), T_(int(series.size()) - 1) {
    const int ns = d_ * (T_ + 1);
    state_mean_.resize(ns);
    state_cov_.resize(ns, ns);
    std::vector<Matrix> marg(T_ + 1);
    std::vector<Matrix> Apow(T_ + 1);
    Apow[0] = Matrix::Identity(d_, d_);
    for (int k = 1; k <= T_; ++k) Apow[k] = m.A * Apow[k - 1];
    Vector mean = m.mu0;
    Matrix cov = m.K0;
    for (int k = 0; k <= T_; ++k) {
      if (k > 0) {
        mean = m.A * mean;
        cov = m.A * cov * m.A.transpose() + m.Q;
      }
      state_mean_.segment(k * d_, d_) = mean;
      marg[k] = cov;
    }
    for (int k = 0; k <= T_; ++k) {
      for (int l = 0; l <= k; ++l) {
        const Matrix c = Apow[k - l] * marg[l];
        state_cov_.block(k * d_, l * d_, d_, d_) = c;
        state_cov_.block(l * d_, k * d_, d_, d_) = c.transpose();
      }
    }
    for (int k = 0; k <= T_; ++k)
      for (Eigen::Index i = 0; i < series[k].cols(); ++i) {
        obs_time_.push_back(k);
        obs_.push_back(series[k].col(i));
      }
    R_ = m.R;
  }

  struct Posterior {
    Vector mean;
    Matrix cov;
  };

  /// Posterior of all states given the observations with time <= tmax.
  Posterior condition(int tmax) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < obs_.size(); ++i)
      if (obs_time_[i] <= tmax) idx.push_back(int(i));
    if (idx.empty()) return {state_mean_, state_cov_};
    const int no = int(idx.size()) * d_;
    Matrix Sxx(no, no), Szx(state_cov_.rows(), no);
    Vector resid(no);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const int ta = obs_time_[idx[a]];
      resid.segment(a * d_, d_) = obs_[idx[a]] - state_mean_.segment(ta * d_, d_);
      Szx.middleCols(a * d_, d_) = state_cov_.middleCols(ta * d_, d_);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const int tb = obs_time_[idx[b]];
        Sxx.block(a * d_, b * d_, d_, d_) = state_cov_.block(ta * d_, tb * d_, d_, d_);
        if (a == b) Sxx.block(a * d_, b * d_, d_, d_) += R_;
      }
    }
    Eigen::LDLT<Matrix> f(Sxx);
    Posterior p;
    p.mean = state_mean_ + Szx * f.solve(resid);
    p.cov = state_cov_ - Szx * f.solve(Szx.transpose());
    return p;
  }

  /// Joint log-density of all observations.
  double loglik() const {
    if (obs_.empty()) return 0.0;
    const int no = int(obs_.size()) * d_;
    Matrix Sxx(no, no);
    Vector resid(no);
    for (std::size_t a = 0; a < obs_.size(); ++a) {
      resid.segment(a * d_, d_) = obs_[a] - state_mean_.segment(obs_time_[a] * d_, d_);
      for (std::size_t b = 0; b < obs_.size(); ++b) {
        Sxx.block(a * d_, b * d_, d_, d_) = state_cov_.block(obs_time_[a] * d_, obs_time_[b] * d_, d_, d_);
        if (a == b) Sxx.block(a * d_, b * d_, d_, d_) += R_;
      }
    }
    Eigen::LLT<Matrix> f(Sxx);
    const double logdet = 2.0 * f.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double quad = f.matrixL().solve(resid).squaredNorm();
    return -0.5 * (no * std::log(2.0 * std::numbers::pi) + logdet + quad);
  }

  Vector block_mean(const Posterior& p, int k) const { return p.mean.segment(k * d_, d_); }
  Matrix block_cov(const Posterior& p, int k, int l) const { return p.cov.block(k * d_, l * d_, d_, d_); }

  int horizon() const { return T_; }

 private:
  int d_;
  int T_;
  Vector state_mean_;
  Matrix state_cov_;
  Matrix R_;
  std::vector<int> obs_time_;
  std::vector<Vector> obs_;
};

}  // namespace oracle
