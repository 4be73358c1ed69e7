#pragma once

#include <random>

#include "nsda/dataset.hpp"
#include "nsda/linalg.hpp"
#include "nsda/model.hpp"
#include "nsda/random.hpp"

namespace testing_support {

using nsda::Matrix;
using nsda::Rng;
using nsda::Vector;

inline Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * n01(rng);
  return m;
}

/// Well-conditioned SPD matrix with eigenvalues roughly in [lo, lo + scale].
inline Matrix random_spd(int d, Rng& rng, double lo = 0.1, double scale = 1.0) {
  const Matrix B = random_matrix(d, d, rng);
  return nsda::symmetrize(Matrix(scale * B * B.transpose() / d + lo * Matrix::Identity(d, d)));
}

inline nsda::ClassModel<double> random_model(int d, Rng& rng) {
  nsda::ClassModel<double> m;
  Matrix A = random_matrix(d, d, rng, 0.6);
  m.A = A;
  m.Q = random_spd(d, rng, 0.05, 0.5);
  m.R = random_spd(d, rng, 0.1, 0.5);
  m.mu0 = random_matrix(d, 1, rng);
  m.K0 = random_spd(d, rng, 0.1, 1.0);
  return m;
}

/// Random observation series; counts drawn uniformly from 0..nmax.
inline nsda::ObservationSeries<double> random_series(const nsda::ClassModel<double>& m, int T, int nmax,
                                                     Rng& rng) {
  std::uniform_int_distribution<int> cnt(0, nmax);
  Eigen::MatrixXi counts(1, T + 1);
  for (int k = 0; k <= T; ++k) counts(0, k) = cnt(rng);
  nsda::LinearGaussianModel<double> lg{{m}};
  return nsda::simulate_linear(lg, counts, rng()).data.class_series(0);
}

inline nsda::ClassModel<double> scalar_model(double a, double q, double r, double mu0, double k0) {
  nsda::ClassModel<double> m;
  m.A = Matrix::Constant(1, 1, a);
  m.Q = Matrix::Constant(1, 1, q);
  m.R = Matrix::Constant(1, 1, r);
  m.mu0 = Vector::Constant(1, mu0);
  m.K0 = Matrix::Constant(1, 1, k0);
  return m;
}

}  // namespace testing_support
