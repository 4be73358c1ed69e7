#include "nsda/presets.hpp"

#include <algorithm>
#include <cmath>

namespace nsda::presets {

LinearGaussianModel<double> table1_model() {
  const Matrix I = Matrix::Identity(2, 2);
  ClassModel<double> c0, c1;
  c0.A.resize(2, 2);
  c0.A << 1.3, 0.2, 0.9, 0.6;
  c1.A.resize(2, 2);
  c1.A << 0.9, 0.8, 1.0, 0.5;
  c0.mu0 = (Vector(2) << 1.2, 0.5).finished();
  c1.mu0 = (Vector(2) << 0.2, 1.5).finished();
  for (auto* c : {&c0, &c1}) {
    c->Q = 0.1 * I;
    c->R = 0.2 * I;
    c->K0 = 0.1 * I;
  }
  return {{c0, c1}};
}

LinearGaussianModel<double> table2_init(const LinearGaussianModel<double>& truth) {
  require(truth.num_classes() == 2 && truth.dim() == 2, "table2_init expects the two-class 2-D model");
  LinearGaussianModel<double> init = truth;
  init.classes[0].A.resize(2, 2);
  init.classes[0].A << 1.0, 1.5, 0.8, 1.2;
  init.classes[1].A.resize(2, 2);
  init.classes[1].A << 0.8, 1.3, 0.5, 2.0;
  for (auto& c : init.classes) c.mu0 = Vector::Ones(2);
  return init;
}

Vector rotation_drift(const Vector& z, const Vector& theta) {
  const double radius = std::max(z.norm(), 0.5);
  const double angle = theta[0] / radius;
  const double c = std::cos(angle), s = std::sin(angle);
  Vector out(2);
  out << c * z[0] - s * z[1], s * z[0] + c * z[1];
  return out;
}

NonlinearModel nonlinear_model(double r, double q, double step) {
  const Matrix I = Matrix::Identity(2, 2);
  NonlinearModel m;
  const Vector starts[2] = {(Vector(2) << 1.0, 2.0).finished(), (Vector(2) << 1.0, 3.0).finished()};
  for (const auto& mu0 : starts) {
    m.classes.push_back(
        make_additive_gaussian_class(2, rotation_drift, q * I, mu0, I, r * I, Vector::Constant(1, step)));
  }
  return m;
}

Eigen::MatrixXi uniform_counts(int num_classes, int horizon, int n) {
  return Eigen::MatrixXi::Constant(num_classes, horizon + 1, n);
}

}  // namespace nsda::presets
