#include "nsda/dataset.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace nsda {

void TimeLabeledDataset::validate() const {
  require(dim > 0, "dataset dimension must be positive");
  require(num_classes > 0, "dataset needs at least one class");
  require(horizon >= 0, "dataset horizon must be nonnegative");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string at = "sample " + std::to_string(i) + ": ";
    require(s.x.size() == dim, at + "feature length differs from dim");
    require(s.label >= 0 && s.label < num_classes, at + "class label out of range");
    if (s.time) require(*s.time >= 0 && *s.time <= horizon, at + "time index out of range");
  }
}

bool TimeLabeledDataset::fully_timed() const {
  for (const auto& s : samples)
    if (!s.time) return false;
  return true;
}

Eigen::MatrixXi TimeLabeledDataset::counts() const {
  Eigen::MatrixXi n = Eigen::MatrixXi::Zero(num_classes, horizon + 1);
  for (const auto& s : samples)
    if (s.time) ++n(s.label, *s.time);
  return n;
}

ObservationSeries<double> TimeLabeledDataset::class_series(int j) const {
  require(j >= 0 && j < num_classes, "class index out of range");
  const Eigen::MatrixXi n = counts();
  ObservationSeries<double> series(horizon + 1);
  for (int k = 0; k <= horizon; ++k) series[k].resize(dim, n(j, k));
  std::vector<int> fill(horizon + 1, 0);
  for (const auto& s : samples) {
    if (s.label != j || !s.time) continue;
    series[*s.time].col(fill[*s.time]++) = s.x;
  }
  return series;
}

Matrix TimeLabeledDataset::class_samples(int j) const {
  require(j >= 0 && j < num_classes, "class index out of range");
  const auto sizes = class_sizes();
  Matrix out(dim, sizes[j]);
  Eigen::Index c = 0;
  for (const auto& s : samples)
    if (s.label == j) out.col(c++) = s.x;
  return out;
}

std::vector<int> TimeLabeledDataset::class_sizes() const {
  std::vector<int> n(num_classes, 0);
  for (const auto& s : samples) ++n[s.label];
  return n;
}

namespace {

void check_counts(const Eigen::MatrixXi& counts, int num_classes) {
  require(counts.rows() == num_classes, "counts must have one row per class");
  require(counts.cols() >= 1, "counts must cover at least time 0");
  require(counts.minCoeff() >= 0, "counts must be nonnegative");
}

void emit_observations(TimeLabeledDataset& data, int j, int k, const Vector& z, int n,
                       const GaussianSampler& noise, Rng& rng) {
  for (int i = 0; i < n; ++i) data.samples.push_back({z + noise(rng), j, k});
}

}  // namespace

SimulationResult simulate_linear(const LinearGaussianModel<double>& model, const Eigen::MatrixXi& counts,
                                 std::uint64_t seed) {
  model.validate();
  check_counts(counts, model.num_classes());
  const int d = int(model.dim());
  const int T = int(counts.cols()) - 1;

  SimulationResult out;
  out.data.dim = d;
  out.data.num_classes = model.num_classes();
  out.data.horizon = T;
  out.data.samples.reserve(std::size_t(counts.sum()));

  for (int j = 0; j < model.num_classes(); ++j) {
    const auto& m = model.classes[j];
    const GaussianSampler w(Vector::Zero(d), m.Q);
    const GaussianSampler v(Vector::Zero(d), m.R);
    LatentTrajectory traj(T + 1, d);
    Vector z;
    for (int k = 0; k <= T; ++k) {
      Rng latent = make_stream(seed, {std::uint64_t(Stream::latent), std::uint64_t(j), std::uint64_t(k)});
      z = (k == 0) ? GaussianSampler(m.mu0, m.K0)(latent) : Vector(m.A * z + w(latent));
      traj.row(k) = z.transpose();
      Rng obs = make_stream(seed, {std::uint64_t(Stream::observation), std::uint64_t(j), std::uint64_t(k)});
      emit_observations(out.data, j, k, z, counts(j, k), v, obs);
    }
    out.latent.push_back(std::move(traj));
  }
  return out;
}

void NonlinearClassModel::validate() const {
  require(dim > 0, "nonlinear model dimension must be positive");
  require(bool(transition) && bool(sample_noise) && bool(transition_log_density),
          "nonlinear model needs transition, noise sampler and transition density");
  require(bool(sample_initial) && bool(initial_log_density),
          "nonlinear model needs initial sampler and density");
  require(R.rows() == dim && R.cols() == dim, "R must be d x d");
  require(is_symmetric_psd(R, 1e-10), "R is not symmetric positive semidefinite");
}

NonlinearClassModel make_additive_gaussian_class(int dim, NonlinearClassModel::DriftFn drift,
                                                 const Matrix& Q, const Vector& mu0, const Matrix& K0,
                                                 const Matrix& R, Vector theta,
                                                 NonlinearClassModel::CovFn noise_cov) {
  require(Q.rows() == dim && mu0.size() == dim && K0.rows() == dim, "additive model shapes");
  if (!noise_cov) noise_cov = [Q](const Vector&) { return Q; };

  NonlinearClassModel m;
  m.dim = dim;
  m.R = R;
  m.theta = std::move(theta);
  m.drift = drift;
  m.noise_cov = noise_cov;
  m.transition = [drift](const Vector& z, const Vector& w, const Vector& th) -> Vector {
    return drift(z, th) + w;
  };
  m.sample_noise = [noise_cov, dim](Rng& rng, const Vector& th) {
    return GaussianSampler(Vector::Zero(dim), noise_cov(th))(rng);
  };
  m.transition_log_density = [drift, noise_cov](const Vector& zn, const Vector& z, const Vector& th) {
    const auto f = SpdFactor<double>::factor(noise_cov(th), "transition noise covariance");
    return gaussian_logpdf(zn, drift(z, th), f);
  };

  const GaussianSampler init(mu0, K0);
  m.sample_initial = [init](Rng& rng, const Vector&) { return init(rng); };
  auto init_factor = SpdFactor<double>::try_factor(K0);
  m.initial_log_density = [init_factor, mu0](const Vector& z0, const Vector&) {
    if (!init_factor) {
      // Point-mass initial law.
      return (z0 - mu0).cwiseAbs().maxCoeff() == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    return gaussian_logpdf(z0, mu0, *init_factor);
  };
  m.validate();
  return m;
}

NonlinearClassModel linear_as_nonlinear(const ClassModel<double>& c) {
  const int d = int(c.dim());
  Vector theta(d * d);
  for (int r = 0; r < d; ++r)
    for (int s = 0; s < d; ++s) theta[r * d + s] = c.A(r, s);
  auto drift = [d](const Vector& z, const Vector& th) -> Vector {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(
        th.data(), d, d);
    return A * z;
  };
  return make_additive_gaussian_class(d, drift, c.Q, c.mu0, c.K0, c.R, theta);
}

SimulationResult simulate_nonlinear(const NonlinearModel& model, const Eigen::MatrixXi& counts,
                                    std::uint64_t seed) {
  require(!model.classes.empty(), "model has no classes");
  check_counts(counts, model.num_classes());
  const int d = model.classes.front().dim;
  const int T = int(counts.cols()) - 1;

  SimulationResult out;
  out.data.dim = d;
  out.data.num_classes = model.num_classes();
  out.data.horizon = T;

  for (int j = 0; j < model.num_classes(); ++j) {
    const auto& m = model.classes[j];
    m.validate();
    require(m.dim == d, "class " + std::to_string(j) + " dimension mismatch");
    const GaussianSampler v(Vector::Zero(d), m.R);
    LatentTrajectory traj(T + 1, d);
    Vector z;
    for (int k = 0; k <= T; ++k) {
      Rng latent = make_stream(seed, {std::uint64_t(Stream::latent), std::uint64_t(j), std::uint64_t(k)});
      z = (k == 0) ? m.sample_initial(latent, m.theta)
                   : m.transition(z, m.sample_noise(latent, m.theta), m.theta);
      traj.row(k) = z.transpose();
      Rng obs = make_stream(seed, {std::uint64_t(Stream::observation), std::uint64_t(j), std::uint64_t(k)});
      emit_observations(out.data, j, k, z, counts(j, k), v, obs);
    }
    out.latent.push_back(std::move(traj));
  }
  return out;
}

}  // namespace nsda
