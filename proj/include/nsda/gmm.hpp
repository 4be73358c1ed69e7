#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nsda/kalman.hpp"
#include "nsda/linalg.hpp"
#include "nsda/model.hpp"
#include "nsda/random.hpp"
#include "nsda/types.hpp"

namespace nsda {

/// Finite parameter set searched by fit_gmm_kalman, with an optional log prior
/// over whole candidates (null means uniform, i.e. 0).
template <typename Scalar>
struct CandidateSet {
  std::vector<LinearGaussianModel<Scalar>> candidates;
  std::function<Scalar(const LinearGaussianModel<Scalar>&)> log_prior;

  Scalar prior(const LinearGaussianModel<Scalar>& m) const { return log_prior ? log_prior(m) : Scalar(0); }

  void validate() const {
    require(!candidates.empty(), "candidate set is empty");
    for (const auto& c : candidates) {
      require(c.dim() == candidates.front().dim(), "candidates disagree on dimension");
      require(c.num_classes() == candidates.front().num_classes(), "candidates disagree on class count");
    }
  }
};

struct LabelAssignment {
  std::vector<int> labels;  // per sample, in 0..T_max
  int horizon = 0;          // max assigned label, 0 when there are no samples
};

/// Observation-space mixture components implied by one class model. The
/// observation noise enters every recursion step, so for R != 0 these differ
/// from theoretical_moments.
template <typename Scalar>
MomentSequence<Scalar> implied_component_moments(const ClassModel<Scalar>& m, int T) {
  require(T >= 0, "horizon must be nonnegative");
  MomentSequence<Scalar> out;
  out.push_back({m.mu0, symmetrize(Mat<Scalar>(m.K0 + m.R))});
  for (int k = 1; k <= T; ++k) {
    const auto& prev = out.back();
    out.push_back({m.A * prev.mean, symmetrize(Mat<Scalar>(m.A * prev.cov * m.A.transpose() + m.Q + m.R))});
  }
  return out;
}

/// Hard maximum-likelihood time label for each column of X; ties go to the
/// smaller index.
template <typename Scalar>
LabelAssignment assign_time_labels(const Mat<Scalar>& X, const MomentSequence<Scalar>& components) {
  require(!components.empty(), "no mixture components");
  const auto d = components.front().mean.size();
  require(X.cols() == 0 || X.rows() == d, "sample dimension differs from components");
  std::vector<SpdFactor<Scalar>> factors;
  for (std::size_t k = 0; k < components.size(); ++k) {
    auto f = SpdFactor<Scalar>::try_factor(psd_project(components[k].cov, Scalar(1e-9)));
    if (!f) throw NumericalError("mixture component " + std::to_string(k) + " is not positive definite");
    factors.push_back(std::move(*f));
  }
  LabelAssignment a;
  a.labels.resize(X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    int arg = 0;
    for (std::size_t k = 0; k < components.size(); ++k) {
      const Scalar lp = gaussian_logpdf(Vec<Scalar>(X.col(i)), components[k].mean, factors[k]);
      if (lp > best) {
        best = lp;
        arg = int(k);
      }
    }
    a.labels[i] = arg;
    a.horizon = std::max(a.horizon, arg);
  }
  return a;
}

/// Groups columns of X by label into times 0..horizon, keeping sample order.
template <typename Scalar>
ObservationSeries<Scalar> regroup(const Mat<Scalar>& X, const std::vector<int>& labels, int horizon) {
  require(std::size_t(X.cols()) == labels.size(), "labels and samples differ in count");
  std::vector<int> count(horizon + 1, 0);
  for (int t : labels) {
    require(t >= 0 && t <= horizon, "label outside the horizon");
    ++count[t];
  }
  ObservationSeries<Scalar> s;
  for (int k = 0; k <= horizon; ++k) s.push_back(Mat<Scalar>(X.rows(), count[k]));
  std::fill(count.begin(), count.end(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) s[labels[i]].col(count[labels[i]]++) = X.col(i);
  return s;
}

/// Kalman log-likelihood of the relabeled samples plus `log_prior`.
template <typename Scalar>
Scalar score_candidate(const ClassModel<Scalar>& theta, const Mat<Scalar>& X, const LabelAssignment& a,
                       Scalar log_prior = 0) {
  const auto series = regroup(X, a.labels, a.horizon);
  return log_prior + forward_pass(theta, series).loglik;
}

/// Which anchor blocks generate_candidates perturbs.
struct PerturbFlags {
  bool A = true;
  bool mu0 = true;
  bool Q = false;
  bool R = false;
  bool K0 = false;
};

struct CandidateConfig {
  int count = 32;       // perturbed candidates besides the anchor
  double spread = 1.5;  // entries scaled by exp(U(-log spread, log spread))
  PerturbFlags perturb;

  void validate() const {
    require(count >= 0, "candidate count must be nonnegative");
    require(spread >= 1.0, "candidate spread must be at least 1");
  }
};

/// The anchor followed by `config.count` log-uniform entrywise perturbations.
/// Covariance blocks are rescaled congruently so they stay PSD.
inline CandidateSet<double> generate_candidates(const LinearGaussianModel<double>& anchor,
                                                const CandidateConfig& config, std::uint64_t seed) {
  config.validate();
  anchor.validate();
  CandidateSet<double> set;
  set.candidates.push_back(anchor);
  const double h = std::log(config.spread);
  for (int m = 0; m < config.count; ++m) {
    Rng rng = make_stream(seed, {std::uint64_t(Stream::candidates), std::uint64_t(m)});
    std::uniform_real_distribution<double> u(-h, h);
    auto entrywise = [&](Matrix& M) { M = M.unaryExpr([&](double x) { return x * std::exp(u(rng)); }); };
    auto congruent = [&](Matrix& M) {
      Vector s(M.rows());
      for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::exp(0.5 * u(rng));
      M = s.asDiagonal() * M * s.asDiagonal();
    };
    LinearGaussianModel<double> c = anchor;
    for (auto& cls : c.classes) {
      if (config.perturb.A) entrywise(cls.A);
      if (config.perturb.mu0) {
        Matrix mu = cls.mu0;
        entrywise(mu);
        cls.mu0 = mu;
      }
      if (config.perturb.Q) congruent(cls.Q);
      if (config.perturb.R) congruent(cls.R);
      if (config.perturb.K0) congruent(cls.K0);
    }
    set.candidates.push_back(std::move(c));
  }
  return set;
}

template <typename Scalar>
struct GmmFit {
  LinearGaussianModel<Scalar> model;           // selected class models
  std::vector<int> selected;                   // candidate index per class
  std::vector<LabelAssignment> labels;         // per class, for the selected candidate
  std::vector<std::vector<Scalar>> scores;     // [class][candidate], NaN where scoring failed
  int horizon = 0;                             // max over classes of the selected horizons
  std::vector<SmootherOutput<Scalar>> smoothers;
  std::vector<std::string> warnings;
};

/// Algorithm: for every class and candidate, build implied components on
/// 0..T_max, assign hard time labels, score; keep the first argmax per class,
/// then smooth each class on its relabeled samples over the common horizon.
template <typename Scalar>
GmmFit<Scalar> fit_gmm_kalman(const std::vector<Mat<Scalar>>& unlabeled, const CandidateSet<Scalar>& set,
                              int T_max) {
  set.validate();
  require(T_max >= 0, "T_max must be nonnegative");
  const int c = set.candidates.front().num_classes();
  require(int(unlabeled.size()) == c, "need one sample block per class");

  GmmFit<Scalar> fit;
  fit.model.classes.resize(c);
  fit.selected.assign(c, -1);
  fit.labels.resize(c);
  fit.scores.assign(c, std::vector<Scalar>(set.candidates.size(), std::numeric_limits<Scalar>::quiet_NaN()));

  for (int j = 0; j < c; ++j) {
    std::string failures;
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t m = 0; m < set.candidates.size(); ++m) {
      const auto& theta = set.candidates[m].classes[j];
      try {
        const auto a = assign_time_labels(unlabeled[j], implied_component_moments(theta, T_max));
        const Scalar s = score_candidate(theta, unlabeled[j], a, set.prior(set.candidates[m]));
        if (std::isnan(double(s))) throw NumericalError("score is NaN");
        fit.scores[j][m] = s;
        if (fit.selected[j] < 0 || s > best) {
          best = s;
          fit.selected[j] = int(m);
          fit.labels[j] = a;
        }
      } catch (const std::exception& e) {
        failures += " [" + std::to_string(m) + "] " + e.what() + ";";
      }
    }
    if (fit.selected[j] < 0) throw NumericalError("all candidates failed for class " + std::to_string(j) + ":" + failures);
    fit.model.classes[j] = set.candidates[fit.selected[j]].classes[j];
  }

  for (int j = 0; j < c; ++j) fit.horizon = std::max(fit.horizon, fit.labels[j].horizon);
  for (int j = 0; j < c; ++j) {
    if (fit.labels[j].horizon != fit.horizon) {
      fit.warnings.push_back("class " + std::to_string(j) + " selected horizon " +
                             std::to_string(fit.labels[j].horizon) + " below common horizon " +
                             std::to_string(fit.horizon));
    }
    fit.smoothers.push_back(smooth(fit.model.classes[j], regroup(unlabeled[j], fit.labels[j].labels, fit.horizon)));
  }
  return fit;
}

}  // namespace nsda
