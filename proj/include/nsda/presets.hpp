#pragma once

#include "nsda/dataset.hpp"
#include "nsda/model.hpp"

namespace nsda::presets {

/// Two-class, two-dimensional linear drift model used throughout the
/// linear experiments (A^0, A^1 expanding; Q = 0.1 I, R = 0.2 I, K0 = 0.1 I).
LinearGaussianModel<double> table1_model();

/// EM starting point for table1_model(): the A and initial-mean guesses
/// replace the true values, every other block is copied from `truth`.
LinearGaussianModel<double> table2_init(const LinearGaussianModel<double>& truth);

/// Radius-dependent rotation: z' = rot(step / max(|z|, 0.5)) z + w. Each
/// class moves a fixed arc length `step` per time step around the origin,
/// so classes at different radii sweep through each other's past regions.
Vector rotation_drift(const Vector& z, const Vector& theta);

/// Two-class nonlinear configuration: z_0^0 ~ N((1,2), I), z_0^1 ~ N((1,3), I),
/// rotation drift with arc step `step`, Q = q I and observation noise R = r I.
NonlinearModel nonlinear_model(double r = 0.01, double q = 0.02, double step = 1.2);

/// Per-class per-time counts matrix filled with n.
Eigen::MatrixXi uniform_counts(int num_classes, int horizon, int n);

}  // namespace nsda::presets
