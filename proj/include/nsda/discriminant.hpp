#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "nsda/linalg.hpp"
#include "nsda/types.hpp"

namespace nsda {

/// Per-class, per-time Gaussian moments and per-time class priors.
template <typename Scalar>
struct TimeIndexedGaussianMoments {
  std::vector<MomentSequence<Scalar>> classes;  // [j][k]
  std::vector<std::vector<Scalar>> priors;      // [k][j]; empty means uniform

  int num_classes() const { return int(classes.size()); }
  int horizon() const { return classes.empty() ? -1 : int(classes.front().size()) - 1; }
  Eigen::Index dim() const { return classes.front().front().mean.size(); }

  Scalar prior(int j, int k) const { return priors.empty() ? Scalar(1) / Scalar(num_classes()) : priors[k][j]; }

  void validate() const {
    require(num_classes() >= 2, "need at least two classes");
    require(horizon() >= 0, "moments must cover time 0");
    const auto d = classes.front().front().mean.size();
    for (int j = 0; j < num_classes(); ++j) {
      require(int(classes[j].size()) == horizon() + 1, "class " + std::to_string(j) + " has a different horizon");
      for (int k = 0; k <= horizon(); ++k) {
        const auto& g = classes[j][k];
        require(g.mean.size() == d && g.cov.rows() == d && g.cov.cols() == d,
                "moment shape mismatch at class " + std::to_string(j) + ", k=" + std::to_string(k));
        require(is_symmetric_psd(g.cov, 1e-9),
                "covariance not PSD at class " + std::to_string(j) + ", k=" + std::to_string(k));
      }
    }
    if (!priors.empty()) {
      require(int(priors.size()) == horizon() + 1, "priors must cover every time");
      for (const auto& p : priors) {
        require(int(p.size()) == num_classes(), "prior vector has the wrong length");
        Scalar s = 0;
        for (Scalar v : p) {
          require(v > Scalar(0), "priors must be positive");
          s += v;
        }
        require(std::abs(double(s) - 1.0) <= 1e-12, "priors must sum to one");
      }
    }
  }
};

/// Regularization applied when a covariance has condition number above
/// `max_condition`: add lambda I, starting at `lambda` (or 1e-6 trace/d when
/// unset) and growing tenfold.
struct ShrinkConfig {
  double lambda = 0.0;  // 0 selects the trace-scaled default
  double max_condition = 1e8;
  int max_steps = 30;
};

template <typename Scalar>
struct Regularized {
  Mat<Scalar> cov;
  SpdFactor<Scalar> factor;
  Scalar lambda = 0;
};

template <typename Scalar>
Regularized<Scalar> regularize(const Mat<Scalar>& cov, const ShrinkConfig& cfg, const std::string& context) {
  const auto d = cov.rows();
  Mat<Scalar> sym = symmetrize(cov);
  if (auto f = SpdFactor<Scalar>::try_factor(sym, cfg.max_condition)) return {sym, std::move(*f), Scalar(0)};
  Scalar lambda = cfg.lambda > 0 ? Scalar(cfg.lambda) : Scalar(1e-6) * sym.trace() / Scalar(d);
  if (!(lambda > Scalar(0))) throw NumericalError("covariance singular after regularization: " + context);
  for (int step = 0; step < cfg.max_steps; ++step, lambda *= Scalar(10)) {
    const Mat<Scalar> shrunk = sym + lambda * Mat<Scalar>::Identity(d, d);
    if (auto f = SpdFactor<Scalar>::try_factor(shrunk, cfg.max_condition)) return {shrunk, std::move(*f), lambda};
  }
  throw NumericalError("covariance singular after regularization: " + context);
}

/// Per-class quadratic discriminant D^j(x) = log pi - 0.5 log|S| - 0.5 |x - mu|^2_S.
template <typename Scalar>
struct QuadraticTerm {
  Vec<Scalar> mean;
  Mat<Scalar> precision;
  Scalar log_det = 0;
  Scalar log_prior = 0;

  Scalar operator()(const Vec<Scalar>& x) const {
    const Vec<Scalar> r = x - mean;
    return log_prior - Scalar(0.5) * log_det - Scalar(0.5) * r.dot(precision * r);
  }
};

/// Time-indexed quadratic rule. For two classes the boundary form
/// x'E x + F'x + G + log(pi1/pi0) >= 0 -> class 1 is used.
template <typename Scalar>
struct QuadraticRule {
  std::vector<std::vector<QuadraticTerm<Scalar>>> terms;  // [k][j]
  std::vector<Mat<Scalar>> E;
  std::vector<Vec<Scalar>> F;
  std::vector<Scalar> G;
  std::vector<Scalar> log_prior_ratio;
  bool time_invariant = false;

  int num_classes() const { return int(terms.front().size()); }
  int horizon() const { return int(terms.size()) - 1; }

  /// Two-class boundary statistic; class 1 iff >= 0.
  Scalar boundary(const Vec<Scalar>& x, int k) const {
    const int t = slot(k);
    return x.dot(E[t] * x) + F[t].dot(x) + G[t] + log_prior_ratio[t];
  }

  int slot(int k) const {
    if (time_invariant) return 0;
    if (k < 0 || k > horizon()) throw InvalidArgument("time " + std::to_string(k) + " outside rule horizon");
    return k;
  }
};

/// Time-indexed linear rule sharing one covariance across classes.
template <typename Scalar>
struct LinearRule {
  std::vector<std::vector<Vec<Scalar>>> a;  // [k][j] S^{-1} mu_j
  std::vector<std::vector<Scalar>> c;       // [k][j] -0.5 mu_j' S^{-1} mu_j + log pi_j
  std::vector<Vec<Scalar>> w;               // two-class a1 - a0
  std::vector<Scalar> b;                    // two-class c1 - c0
  std::vector<Mat<Scalar>> pooled;
  bool time_invariant = false;

  int num_classes() const { return int(a.front().size()); }
  int horizon() const { return int(a.size()) - 1; }

  int slot(int k) const {
    if (time_invariant) return 0;
    if (k < 0 || k > horizon()) throw InvalidArgument("time " + std::to_string(k) + " outside rule horizon");
    return k;
  }
};

template <typename Scalar>
QuadraticRule<Scalar> build_nsqda(const TimeIndexedGaussianMoments<Scalar>& m, const ShrinkConfig& shrink = {}) {
  m.validate();
  const int c = m.num_classes();
  QuadraticRule<Scalar> rule;
  for (int k = 0; k <= m.horizon(); ++k) {
    std::vector<QuadraticTerm<Scalar>> row;
    for (int j = 0; j < c; ++j) {
      const auto reg = regularize(m.classes[j][k].cov, shrink,
                                  "class " + std::to_string(j) + ", k=" + std::to_string(k));
      row.push_back({m.classes[j][k].mean, reg.factor.inverse(), reg.factor.log_det(), std::log(m.prior(j, k))});
    }
    if (c == 2) {
      const auto& t0 = row[0];
      const auto& t1 = row[1];
      rule.E.push_back(symmetrize(Mat<Scalar>(Scalar(-0.5) * (t1.precision - t0.precision))));
      rule.F.push_back(t1.precision * t1.mean - t0.precision * t0.mean);
      rule.G.push_back(Scalar(-0.5) * t1.mean.dot(t1.precision * t1.mean) +
                       Scalar(0.5) * t0.mean.dot(t0.precision * t0.mean) - Scalar(0.5) * (t1.log_det - t0.log_det));
      rule.log_prior_ratio.push_back(t1.log_prior - t0.log_prior);
    }
    rule.terms.push_back(std::move(row));
  }
  return rule;
}

/// How per-class covariances are pooled for the linear rule.
enum class Pooling {
  equal_weight,     // plain average over classes
  sample_weighted,  // weights (n_j - 1), divided by sum (n_j - 1)
  total_minus_two,  // weights (n_j - 1), divided by n - 2
};

/// Pooled covariance at one time. Negative (n_j - 1) weights are clamped to 0;
/// a nonpositive divisor falls back to equal weights.
template <typename Scalar>
Mat<Scalar> pool_covariances(const std::vector<Mat<Scalar>>& covs, const std::vector<int>& counts, Pooling mode) {
  require(!covs.empty(), "nothing to pool");
  const auto d = covs.front().rows();
  const int c = int(covs.size());
  Mat<Scalar> out = Mat<Scalar>::Zero(d, d);
  if (mode != Pooling::equal_weight) {
    require(int(counts.size()) == c, "pooling needs one count per class");
    Scalar wsum = 0;
    int n = 0;
    for (int j = 0; j < c; ++j) {
      const Scalar wj = Scalar(std::max(counts[j] - 1, 0));
      out += wj * covs[j];
      wsum += wj;
      n += counts[j];
    }
    const Scalar divisor = mode == Pooling::sample_weighted ? wsum : Scalar(n - 2);
    if (wsum > Scalar(0) && divisor > Scalar(0)) return symmetrize(Mat<Scalar>(out / divisor));
    out.setZero();
  }
  for (const auto& s : covs) out += s;
  return symmetrize(Mat<Scalar>(out / Scalar(c)));
}

/// counts is c x (T+1); ignored for equal_weight pooling.
template <typename Scalar>
LinearRule<Scalar> build_nslda(const TimeIndexedGaussianMoments<Scalar>& m, Pooling pooling,
                               const Eigen::MatrixXi& counts = {}, const ShrinkConfig& shrink = {}) {
  m.validate();
  const int c = m.num_classes();
  if (pooling != Pooling::equal_weight) {
    require(counts.rows() == c && counts.cols() == m.horizon() + 1, "counts must be classes x (T+1)");
  }
  LinearRule<Scalar> rule;
  for (int k = 0; k <= m.horizon(); ++k) {
    std::vector<Mat<Scalar>> covs;
    std::vector<int> n;
    for (int j = 0; j < c; ++j) {
      covs.push_back(m.classes[j][k].cov);
      n.push_back(pooling == Pooling::equal_weight ? 0 : counts(j, k));
    }
    const auto reg = regularize(pool_covariances(covs, n, pooling), shrink, "pooled, k=" + std::to_string(k));
    std::vector<Vec<Scalar>> a;
    std::vector<Scalar> off;
    for (int j = 0; j < c; ++j) {
      const auto& mu = m.classes[j][k].mean;
      a.push_back(reg.factor.solve(mu));
      off.push_back(Scalar(-0.5) * mu.dot(a.back()) + std::log(m.prior(j, k)));
    }
    if (c == 2) {
      rule.w.push_back(a[1] - a[0]);
      rule.b.push_back(off[1] - off[0]);
    }
    rule.a.push_back(std::move(a));
    rule.c.push_back(std::move(off));
    rule.pooled.push_back(reg.cov);
  }
  return rule;
}

/// Argmax helper: ties go to the smallest index.
template <typename Scalar>
int argmax_first(const std::vector<Scalar>& v) {
  int best = 0;
  for (int j = 1; j < int(v.size()); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

template <typename Scalar>
int classify(const QuadraticRule<Scalar>& rule, const Vec<Scalar>& x, int k) {
  const int t = rule.slot(k);
  if (rule.num_classes() == 2) return rule.boundary(x, k) >= Scalar(0) ? 1 : 0;
  std::vector<Scalar> d;
  for (const auto& term : rule.terms[t]) d.push_back(term(x));
  return argmax_first(d);
}

template <typename Scalar>
int classify(const LinearRule<Scalar>& rule, const Vec<Scalar>& x, int k) {
  const int t = rule.slot(k);
  if (rule.num_classes() == 2) return rule.w[t].dot(x) + rule.b[t] >= Scalar(0) ? 1 : 0;
  std::vector<Scalar> d;
  for (int j = 0; j < rule.num_classes(); ++j) d.push_back(rule.a[t][j].dot(x) + rule.c[t][j]);
  return argmax_first(d);
}

template <typename Scalar>
using DiscriminantRule = std::variant<LinearRule<Scalar>, QuadraticRule<Scalar>>;

template <typename Scalar>
int classify(const DiscriminantRule<Scalar>& rule, const Vec<Scalar>& x, int k) {
  return std::visit([&](const auto& r) { return classify(r, x, k); }, rule);
}

enum class BaselineKind { lda, qda };

/// Time-agnostic LDA/QDA from per-class sample blocks (d x n_j): sample
/// means and unbiased covariances, pooled with (n_j - 1) weights, empirical
/// class priors.
template <typename Scalar>
DiscriminantRule<Scalar> naive_baseline(const std::vector<Mat<Scalar>>& samples, BaselineKind kind,
                                        const ShrinkConfig& shrink = {}) {
  const int c = int(samples.size());
  require(c >= 2, "need at least two classes");
  TimeIndexedGaussianMoments<Scalar> m;
  Eigen::MatrixXi counts(c, 1);
  Eigen::Index total = 0;
  for (int j = 0; j < c; ++j) {
    const auto& X = samples[j];
    if (X.cols() < 2) throw InvalidArgument("class " + std::to_string(j) + " has fewer than 2 samples");
    const Vec<Scalar> mean = X.rowwise().mean();
    const Mat<Scalar> centered = X.colwise() - mean;
    m.classes.push_back({{mean, symmetrize(Mat<Scalar>(centered * centered.transpose() / Scalar(X.cols() - 1)))}});
    counts(j, 0) = int(X.cols());
    total += X.cols();
  }
  std::vector<Scalar> p;
  for (int j = 0; j < c; ++j) p.push_back(Scalar(counts(j, 0)) / Scalar(total));
  m.priors = {p};
  if (kind == BaselineKind::lda) {
    auto rule = build_nslda(m, Pooling::sample_weighted, counts, shrink);
    rule.time_invariant = true;
    return rule;
  }
  auto rule = build_nsqda(m, shrink);
  rule.time_invariant = true;
  return rule;
}

}  // namespace nsda
