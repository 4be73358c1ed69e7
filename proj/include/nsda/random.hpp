#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Eigenvalues>

#include "nsda/linalg.hpp"
#include "nsda/types.hpp"

namespace nsda {

using Rng = std::mt19937_64;

/// Substream purposes used by the generators.
enum class Stream : std::uint64_t { latent = 1, observation = 2, test = 3, particle = 4, candidates = 5 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the substream addressed by `ids` under a master seed. Distinct id
/// paths give statistically independent generators.
inline std::uint64_t substream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = splitmix64(seed);
  for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  return Rng(substream_seed(seed, ids));
}

/// Draws from N(mean, cov) for a PSD (possibly singular) covariance using a
/// symmetric square root.
class GaussianSampler {
 public:
  GaussianSampler() = default;
  GaussianSampler(Vector mean, const Matrix& cov) : mean_(std::move(mean)) {
    require(cov.rows() == mean_.size() && cov.cols() == mean_.size(), "sampler covariance shape");
    if (cov.size() == 0) {
      root_ = cov;
      return;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov));
    require(es.eigenvalues().minCoeff() >= -1e-10, "sampler covariance is not PSD");
    root_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  Vector operator()(Rng& rng) const {
    std::normal_distribution<double> n01;
    Vector u(mean_.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = n01(rng);
    return mean_ + root_ * u;
  }

  const Vector& mean() const { return mean_; }

 private:
  Vector mean_;
  Matrix root_;
};

}  // namespace nsda
