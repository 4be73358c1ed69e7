#include "nsda/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "nsda/linalg.hpp"
#include "nsda/random.hpp"

namespace nsda {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kForwardInit = 0;
constexpr std::uint64_t kForwardStep = 1;
constexpr std::uint64_t kEmIteration = 2;
constexpr std::uint64_t kEmFinal = 3;

double log_sum_exp(const Eigen::ArrayXd& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v - m).exp().sum());
}

/// Summed log N(x_r; z, R) over the columns of one time's observations,
/// via the centered decomposition n |xbar - z|^2 + sum |x_r - xbar|^2.
class ObservationTerm {
 public:
  ObservationTerm(const Matrix& X, const SpdFactor<double>& R) : n_(X.cols()) {
    if (n_ == 0) return;
    const auto d = X.rows();
    whitened_mean_ = R.whiten(Vector(X.rowwise().mean()));
    const Matrix centered = X.colwise() - X.rowwise().mean();
    const double spread = R.whiten(centered).squaredNorm();
    constant_ = -0.5 * spread - 0.5 * double(n_) * (double(d) * std::log(2.0 * std::numbers::pi) + R.log_det());
  }

  bool empty() const { return n_ == 0; }

  /// Values for every column of the whitened particle matrix.
  Eigen::ArrayXd operator()(const Matrix& whitened_particles) const {
    if (n_ == 0) return Eigen::ArrayXd::Zero(whitened_particles.cols());
    return constant_ -
           0.5 * double(n_) * (whitened_particles.colwise() - whitened_mean_).colwise().squaredNorm().array().transpose();
  }

 private:
  Eigen::Index n_ = 0;
  Vector whitened_mean_;
  double constant_ = 0.0;
};

/// log p(to_s | from_i) for all pairs between two particle clouds.
class TransitionKernel {
 public:
  TransitionKernel(const NonlinearClassModel& m, const Matrix& from, const Matrix& to, const Vector& theta)
      : model_(m), from_(from), to_(to), theta_(theta) {
    if (!m.additive_gaussian()) return;
    const auto f = SpdFactor<double>::factor(m.noise_cov(theta), "transition noise covariance");
    Matrix drift(from.rows(), from.cols());
    for (Eigen::Index i = 0; i < from.cols(); ++i) drift.col(i) = m.drift(from.col(i), theta);
    drift_w_ = f.whiten(drift);
    to_w_ = f.whiten(to);
    constant_ = -0.5 * (double(from.rows()) * std::log(2.0 * std::numbers::pi) + f.log_det());
    fast_ = true;
  }

  /// log p(to_s | from_i) over all i.
  Eigen::ArrayXd to_target(Eigen::Index s) const {
    if (fast_) return constant_ - 0.5 * (drift_w_.colwise() - to_w_.col(s)).colwise().squaredNorm().array().transpose();
    Eigen::ArrayXd out(from_.cols());
    for (Eigen::Index i = 0; i < from_.cols(); ++i) out[i] = model_.transition_log_density(to_.col(s), from_.col(i), theta_);
    return out;
  }

  /// log p(to_s | from_i) over all s.
  Eigen::ArrayXd from_source(Eigen::Index i) const {
    if (fast_) return constant_ - 0.5 * (to_w_.colwise() - drift_w_.col(i)).colwise().squaredNorm().array().transpose();
    Eigen::ArrayXd out(to_.cols());
    for (Eigen::Index s = 0; s < to_.cols(); ++s) out[s] = model_.transition_log_density(to_.col(s), from_.col(i), theta_);
    return out;
  }

 private:
  const NonlinearClassModel& model_;
  const Matrix& from_;
  const Matrix& to_;
  const Vector& theta_;
  bool fast_ = false;
  Matrix drift_w_, to_w_;
  double constant_ = 0.0;
};

void check_series(const NonlinearClassModel& m, const ObservationSeries<double>& series) {
  require(!series.empty(), "observation series must cover at least time 0");
  for (std::size_t k = 0; k < series.size(); ++k) {
    require(series[k].cols() == 0 || series[k].rows() == m.dim,
            "observation dimension differs from model at time " + std::to_string(k));
  }
}

/// Backward pass shared by the smoother and the pairwise weights: the log of
/// w_{k+1|T,s} / sum_l w_{k,l} p(z_{k+1,s} | z_{k,l}), -inf where w_{k+1|T,s} = 0.
Eigen::ArrayXd backward_coefficients(const TransitionKernel& kernel, const Eigen::ArrayXd& log_w_k,
                                     const Vector& w_next, int k) {
  Eigen::ArrayXd coef = Eigen::ArrayXd::Constant(w_next.size(), kNegInf);
  for (Eigen::Index s = 0; s < w_next.size(); ++s) {
    if (w_next[s] <= 0.0) continue;
    const double denom = log_sum_exp(log_w_k + kernel.to_target(s));
    if (denom == kNegInf || std::isnan(denom)) {
      throw NumericalError("FFBSm denominator vanishes at k=" + std::to_string(k) + ", s=" + std::to_string(s));
    }
    coef[s] = std::log(w_next[s]) - denom;
  }
  return coef;
}

Eigen::ArrayXd safe_log(const Vector& w) {
  return w.array().unaryExpr([](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
}

}  // namespace

void ParticleSystem::check(double tol) const {
  const int T = horizon();
  require(T >= 0, "particle system is empty");
  require(int(forward_weights.size()) == T + 1, "forward weights do not cover every time");
  require(smoothed_weights.empty() || int(smoothed_weights.size()) == T + 1,
          "smoothed weights do not cover every time");
  for (int k = 0; k <= T; ++k) {
    require(particles[k].rows() == dim() && particles[k].cols() == size(), "particle shape changes at k=" + std::to_string(k));
    if (!particles[k].allFinite()) throw NumericalError("non-finite particle at k=" + std::to_string(k));
    auto check_weights = [&](const Vector& w) {
      if (w.size() != size() || !w.allFinite() || (w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > tol) {
        throw NumericalError("weight vector not normalized at k=" + std::to_string(k));
      }
    };
    check_weights(forward_weights[k]);
    if (smoothed()) check_weights(smoothed_weights[k]);
  }
}

double effective_sample_size(const Vector& w) { return 1.0 / w.squaredNorm(); }

Vector normalize_log_weights(const Vector& logw, const std::string& context) {
  const double m = logw.maxCoeff();
  if (m == kNegInf || std::isnan(m)) throw NumericalError("all particle weights underflow at " + context);
  Vector w = (logw.array() - m).exp().matrix();
  w /= w.sum();
  return w;
}

std::vector<int> systematic_resample(const Vector& w, int N, double u) {
  require(N >= 1 && w.size() >= 1, "resampling needs particles");
  std::vector<int> out(N);
  const auto M = w.size();
  double cum = w[0];
  Eigen::Index r = 0;
  for (int i = 0; i < N; ++i) {
    const double target = (u + i) / N;
    while (target >= cum && r + 1 < M) cum += w[++r];
    out[i] = int(r);
  }
  return out;
}

ParticleSystem apf_forward(const NonlinearClassModel& model, const ObservationSeries<double>& series,
                           const ApfConfig& config, std::uint64_t seed) {
  model.validate();
  check_series(model, series);
  require(config.N >= 2, "particle count must be at least 2");
  require(config.lookahead_draws >= 1, "look-ahead draw count must be positive");
  const int T = int(series.size()) - 1;
  const int N = config.N;
  const int d = model.dim;
  const auto Rf = SpdFactor<double>::factor(model.R, "observation noise covariance R");
  const Vector& theta = model.theta;

  ParticleSystem sys;
  {
    Rng rng = make_stream(seed, {std::uint64_t(Stream::particle), kForwardInit});
    Matrix Z(d, N);
    for (int i = 0; i < N; ++i) Z.col(i) = model.sample_initial(rng, theta);
    const ObservationTerm obs(series[0], Rf);
    sys.forward_weights.push_back(
        obs.empty() ? Vector::Constant(N, 1.0 / N) : normalize_log_weights(obs(Rf.whiten(Z)).matrix(), "k=0"));
    sys.particles.push_back(std::move(Z));
  }

  for (int k = 1; k <= T; ++k) {
    Rng rng = make_stream(seed, {std::uint64_t(Stream::particle), kForwardStep, std::uint64_t(k)});
    const Matrix& prev = sys.particles[k - 1];
    const Vector& w_prev = sys.forward_weights[k - 1];
    const ObservationTerm obs(series[k], Rf);

    std::vector<int> anc;
    Eigen::ArrayXd look_ll;
    if (obs.empty()) {
      anc = systematic_resample(w_prev, N, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    } else {
      Matrix nu(d, N);
      const Vector zero = Vector::Zero(d);
      for (int r = 0; r < N; ++r) {
        if (model.zero_noise_available) {
          nu.col(r) = model.transition(prev.col(r), zero, theta);
        } else {
          Vector acc = Vector::Zero(d);
          for (int m = 0; m < config.lookahead_draws; ++m)
            acc += model.transition(prev.col(r), model.sample_noise(rng, theta), theta);
          nu.col(r) = acc / config.lookahead_draws;
        }
      }
      look_ll = obs(Rf.whiten(nu));
      const Vector first = normalize_log_weights((safe_log(w_prev) + look_ll).matrix(),
                                                 "k=" + std::to_string(k) + " (first stage)");
      anc = systematic_resample(first, N, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    }

    Matrix Z(d, N);
    for (int i = 0; i < N; ++i) Z.col(i) = model.transition(prev.col(anc[i]), model.sample_noise(rng, theta), theta);
    Vector w;
    if (obs.empty()) {
      w = Vector::Constant(N, 1.0 / N);
    } else {
      Eigen::ArrayXd logw = obs(Rf.whiten(Z));
      for (int i = 0; i < N; ++i) logw[i] -= look_ll[anc[i]];
      w = normalize_log_weights(logw.matrix(), "k=" + std::to_string(k));
    }
    sys.particles.push_back(std::move(Z));
    sys.forward_weights.push_back(std::move(w));
    sys.ancestors.push_back(std::move(anc));
  }
  return sys;
}

ParticleSystem ffbsm_backward(const NonlinearClassModel& model, ParticleSystem sys) {
  const int T = sys.horizon();
  require(T >= 0 && int(sys.forward_weights.size()) == T + 1, "forward pass missing");
  sys.smoothed_weights.assign(T + 1, Vector());
  sys.smoothed_weights[T] = sys.forward_weights[T];
  for (int k = T - 1; k >= 0; --k) {
    const TransitionKernel kernel(model, sys.particles[k], sys.particles[k + 1], model.theta);
    const Eigen::ArrayXd log_w = safe_log(sys.forward_weights[k]);
    const Eigen::ArrayXd coef = backward_coefficients(kernel, log_w, sys.smoothed_weights[k + 1], k);
    Eigen::ArrayXd logw = Eigen::ArrayXd::Constant(sys.size(), kNegInf);
    for (int i = 0; i < sys.size(); ++i) {
      if (log_w[i] == kNegInf) continue;
      logw[i] = log_w[i] + log_sum_exp(kernel.from_source(i) + coef);
    }
    sys.smoothed_weights[k] = normalize_log_weights(logw.matrix(), "k=" + std::to_string(k) + " (smoother)");
  }
  return sys;
}

PairwiseWeights pairwise_weights(const NonlinearClassModel& model, const ParticleSystem& sys, bool keep_pairs,
                                 double prune) {
  require(sys.smoothed(), "pairwise weights need smoothed weights");
  const int T = sys.horizon();
  PairwiseWeights out;
  out.has_pairs = keep_pairs;
  out.per_time.resize(keep_pairs ? T : 0);
  for (int k = 0; k < T; ++k) {
    const TransitionKernel kernel(model, sys.particles[k], sys.particles[k + 1], model.theta);
    const Eigen::ArrayXd log_w = safe_log(sys.forward_weights[k]);
    const Eigen::ArrayXd coef = backward_coefficients(kernel, log_w, sys.smoothed_weights[k + 1], k);
    Matrix sums = Matrix::Zero(sys.dim(), sys.size());
    for (int i = 0; i < sys.size(); ++i) {
      if (log_w[i] == kNegInf) continue;
      const Vector pw = (log_w[i] + kernel.from_source(i) + coef).exp().matrix();
      sums.col(i) = sys.particles[k + 1] * pw;
      if (!keep_pairs) continue;
      for (int s = 0; s < sys.size(); ++s)
        if (pw[s] >= prune) out.per_time[k].push_back({i, s, pw[s]});
    }
    out.successor_sums.push_back(std::move(sums));
  }
  return out;
}

MomentSequence<double> smc_moments(const ParticleSystem& sys, const Matrix& R) {
  require(sys.smoothed(), "SMC moments need smoothed weights");
  const int N = sys.size();
  require(N >= 2, "SMC moments need at least two particles");
  require(R.rows() == sys.dim() && R.cols() == sys.dim(), "R has the wrong shape");
  MomentSequence<double> out;
  for (int k = 0; k <= sys.horizon(); ++k) {
    const Matrix& Z = sys.particles[k];
    const Vector& w = sys.smoothed_weights[k];
    const Vector mean = Z * w;
    const Matrix C = Z.colwise() - mean;
    const Matrix cov = double(N) / double(N - 1) * (C * w.asDiagonal() * C.transpose());
    out.push_back({mean, symmetrize(Matrix(cov + R))});
  }
  return out;
}

double q_function(const NonlinearClassModel& model, const Vector& theta, const ParticleSystem& sys,
                  const PairwiseWeights& pairs, const ObservationSeries<double>& series) {
  require(sys.smoothed(), "Q function needs smoothed weights");
  const int T = sys.horizon();
  require(int(series.size()) == T + 1, "series and particle horizon differ");

  double i1 = 0.0;
  for (int i = 0; i < sys.size(); ++i) {
    const double w = sys.smoothed_weights[0][i];
    if (w > 0.0) i1 += w * model.initial_log_density(sys.particles[0].col(i), theta);
  }

  // Additive Gaussian: sum_{i,s} w_is |z_s - f_i|^2_Q splits into smoothed
  // marginals and the successor sums, so no pair list is needed.
  double i2 = 0.0;
  if (model.additive_gaussian()) {
    require(int(pairs.successor_sums.size()) == T, "pairwise weights do not cover every transition");
    const auto qf = SpdFactor<double>::factor(model.noise_cov(theta), "transition noise covariance");
    const double c = -0.5 * (double(sys.dim()) * std::log(2.0 * std::numbers::pi) + qf.log_det());
    for (int k = 0; k < T; ++k) {
      Matrix drift(sys.dim(), sys.size());
      for (int i = 0; i < sys.size(); ++i) drift.col(i) = model.drift(sys.particles[k].col(i), theta);
      const Matrix dw = qf.whiten(drift);
      const Matrix sw = qf.whiten(pairs.successor_sums[k]);
      const Eigen::ArrayXd next_sq = qf.whiten(sys.particles[k + 1]).colwise().squaredNorm().array().transpose();
      const Eigen::ArrayXd drift_sq = dw.colwise().squaredNorm().array().transpose();
      const Eigen::ArrayXd cross = dw.cwiseProduct(sw).colwise().sum().array().transpose();
      i2 += c + (sys.smoothed_weights[k].array() * (-0.5 * drift_sq)).sum() + cross.sum() -
            0.5 * (sys.smoothed_weights[k + 1].array() * next_sq).sum();
    }
  } else {
    require(pairs.has_pairs && int(pairs.per_time.size()) == T, "sparse pairwise weights required");
    for (int k = 0; k < T; ++k) {
      for (const auto& p : pairs.per_time[k]) {
        i2 += p.w * model.transition_log_density(sys.particles[k + 1].col(p.s), sys.particles[k].col(p.i), theta);
      }
    }
  }

  double i3 = 0.0;
  const auto Rf = SpdFactor<double>::factor(model.R, "observation noise covariance R");
  for (int k = 0; k <= T; ++k) {
    const ObservationTerm obs(series[k], Rf);
    if (obs.empty()) continue;
    i3 += (sys.smoothed_weights[k].array() * obs(Rf.whiten(sys.particles[k]))).sum();
  }
  const double q = i1 + i2 + i3;
  if (std::isnan(q)) throw NumericalError("Q function evaluated to NaN");
  return q;
}

void ParticleEMConfig::validate(int theta_size) const {
  require(filter.N >= 2, "particle count must be at least 2");
  require(tol > 0.0, "particle-EM tolerance must be positive");
  require(max_iter >= 1, "particle-EM needs at least one iteration");
  require(initial_step > 0.0 && backtrack > 0.0 && backtrack < 1.0, "invalid line-search step control");
  require(max_line_search >= 1 && max_ascent_steps >= 1, "line-search limits must be positive");
  require(fd_step > 0.0, "finite-difference step must be positive");
  require(free.empty() || int(free.size()) == theta_size, "free mask length differs from theta");
  for (const auto& b : psd_blocks) {
    require(b.dim >= 1 && b.offset >= 0 && b.offset + b.dim * b.dim <= theta_size, "PSD block outside theta");
  }
}

ParticleEMResult particle_em(const ObservationSeries<double>& series, const NonlinearClassModel& model,
                             const Vector& theta0, const ParticleEMConfig& config, std::uint64_t seed) {
  config.validate(int(theta0.size()));
  std::vector<int> free;
  for (int i = 0; i < theta0.size(); ++i)
    if (config.free.empty() || config.free[i]) free.push_back(i);

  auto project = [&](Vector t) {
    for (const auto& b : config.psd_blocks) {
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(t.data() + b.offset,
                                                                                           b.dim, b.dim);
      M = psd_project(Matrix(M), 0.0);
    }
    return t;
  };

  ParticleEMResult res;
  NonlinearClassModel m = model;
  Vector theta = project(theta0);
  for (int n = 0; n < config.max_iter; ++n) {
    m.theta = theta;
    const auto sys = particle_smooth(
        m, series, config.filter,
        substream_seed(seed, {std::uint64_t(Stream::particle), kEmIteration, std::uint64_t(n)}));
    const auto pairs = pairwise_weights(m, sys, !m.additive_gaussian());
    auto Q = [&](const Vector& t) {
      try {
        return q_function(m, t, sys, pairs, series);
      } catch (const NumericalError&) {
        return kNegInf;
      }
    };

    ParticleEMIteration it;
    it.iteration = n;
    it.theta = theta;
    it.q_start = it.q_end = Q(theta);
    if (it.q_start == kNegInf) throw NumericalError("particle-EM iteration " + std::to_string(n) + ": Q undefined");
    if (free.empty()) {
      res.trace.iterations.push_back(it);
      res.trace.converged = true;
      break;
    }

    Vector current = theta;
    bool stalled = false;
    for (int step = 0; step < config.max_ascent_steps; ++step) {
      Vector g = Vector::Zero(theta.size());
      for (int i : free) {
        const double h = config.fd_step * std::max(1.0, std::abs(current[i]));
        Vector up = current, down = current;
        up[i] += h;
        down[i] -= h;
        g[i] = (Q(up) - Q(down)) / (2.0 * h);
      }
      if (!g.allFinite()) throw NumericalError("particle-EM iteration " + std::to_string(n) + ": gradient not finite");
      const double g2 = g.squaredNorm();
      // Gradient at roundoff level of Q: nothing left to gain.
      if (g2 * config.initial_step <= 1e-12 * std::max(1.0, std::abs(it.q_end))) break;
      double t = config.initial_step;
      bool ok = false;
      Vector cand;
      double qc = kNegInf;
      for (int ls = 0; ls < config.max_line_search; ++ls, t *= config.backtrack) {
        cand = project(current + t * g);
        qc = Q(cand);
        if (qc >= it.q_end + config.armijo * t * g2) {
          ok = true;
          break;
        }
      }
      if (!ok) {
        stalled = it.accepted_steps == 0;
        break;
      }
      const double gain = (qc - it.q_end) / std::max(1.0, std::abs(it.q_end));
      current = cand;
      it.q_end = qc;
      ++it.accepted_steps;
      if (gain < config.tol) break;
    }
    res.trace.iterations.push_back(it);
    if (stalled) {
      res.trace.line_search_failed = true;
      break;
    }
    const double dtheta = max_abs_diff(current, theta);
    const double dq = std::abs(it.q_end - it.q_start) / std::max(1.0, std::abs(it.q_start));
    theta = current;
    if (dtheta < config.tol || dq < config.tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.theta = theta;
  m.theta = theta;
  res.system = particle_smooth(m, series, config.filter,
                               substream_seed(seed, {std::uint64_t(Stream::particle), kEmFinal}));
  return res;
}

}  // namespace nsda
