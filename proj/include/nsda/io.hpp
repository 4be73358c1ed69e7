#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsda/dataset.hpp"
#include "nsda/discriminant.hpp"
#include "nsda/em.hpp"
#include "nsda/kalman.hpp"
#include "nsda/model.hpp"
#include "nsda/particle.hpp"

namespace nsda::io {

using Json = nlohmann::ordered_json;

/// Malformed input. `path` locates the offending field or line.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Dataset CSV: header class,time,x0,...,x{d-1}; an empty time field marks an
// untimed sample. The horizon read back is max(latest time, min_horizon).
void write_dataset_csv(std::ostream& os, const TimeLabeledDataset& data);
TimeLabeledDataset read_dataset_csv(std::istream& is, const std::string& source = "dataset", int min_horizon = 0);

/// Rows k = 0..T of a latent trajectory: k,z0,...
void write_latent_csv(std::ostream& os, const LatentTrajectory& z);

// Matrices are arrays of rows; vectors are flat arrays.
Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Matrix matrix_from_json(const Json& j, const std::string& path);
Vector vector_from_json(const Json& j, const std::string& path);

Json to_json(const ClassModel<double>& m);
Json to_json(const LinearGaussianModel<double>& m);
ClassModel<double> class_model_from_json(const Json& j, const std::string& path);
/// {"classes": [{"A", "Q", "R", "mu0", "K0"}, ...]}
LinearGaussianModel<double> model_from_json(const Json& j, const std::string& path);

/// iteration,loglik,delta; a final row with empty delta holds the log-likelihood
/// of the returned parameters.
void write_em_trace_csv(std::ostream& os, const EMTrace<double>& trace);

/// One row per k: means and row-major covariances of the prediction, filter
/// and smoother, plus the lag-one covariance when present.
void write_smoother_csv(std::ostream& os, const SmootherOutput<double>& out);

/// k,ess_forward,ess_smoothed
void write_ess_csv(std::ostream& os, const ParticleSystem& system);

/// k,mean...,cov... (row-major)
void write_moments_csv(std::ostream& os, const MomentSequence<double>& m);

Json to_json(const DiscriminantRule<double>& rule);

std::string format_double(double v);

}  // namespace nsda::io
