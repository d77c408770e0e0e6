#pragma once

#include <Eigen/Core>

namespace dtigeo {

/// Unique coefficients of a symmetric 3x3 tensor, ordered
/// [Dxx, Dxy, Dxz, Dyy, Dyz, Dzz] (mm^2/s).
using TensorCoefficients = Eigen::Matrix<double, 6, 1>;

struct DiffusionTensor {
  TensorCoefficients d = TensorCoefficients::Zero();

  DiffusionTensor() = default;
  explicit DiffusionTensor(const TensorCoefficients& coefficients) : d(coefficients) {}
  DiffusionTensor(double xx, double xy, double xz, double yy, double yz, double zz) {
    d << xx, xy, xz, yy, yz, zz;
  }

  static DiffusionTensor diagonal(double xx, double yy, double zz) { return {xx, 0, 0, yy, 0, zz}; }
  /// Symmetric part of m.
  static DiffusionTensor from_matrix(const Eigen::Matrix3d& m);

  double xx() const { return d[0]; }
  double xy() const { return d[1]; }
  double xz() const { return d[2]; }
  double yy() const { return d[3]; }
  double yz() const { return d[4]; }
  double zz() const { return d[5]; }

  Eigen::Matrix3d matrix() const;
  bool is_finite() const { return d.allFinite(); }
};

/// Eigenvalues sorted descending, eigenvectors as the matching columns.
struct EigenSystem {
  Eigen::Vector3d lambdas = Eigen::Vector3d::Zero();
  Eigen::Matrix3d vectors = Eigen::Matrix3d::Identity();
};

/// Symmetric 3x3 eigendecomposition.
///
/// Eigenvalues come from the trigonometric solution of the characteristic
/// cubic. The best-separated eigenvalue's vector is taken from cross products
/// of rows of (D - lambda I); the remaining pair is resolved by an exact 2x2
/// rotation in the orthogonal complement, which keeps close pairs accurate.
/// Falls back to cyclic Jacobi when 1 - r^2 of the cubic is below 1e-14.
EigenSystem eigensystem(const DiffusionTensor& t);

/// Cyclic Jacobi rotations; sorted descending like eigensystem().
EigenSystem jacobi_eigensystem(const Eigen::Matrix3d& m);

struct ScalarMetrics {
  double fa = 0.0;
  double md = 0.0;
  double ad = 0.0;
  double rd = 0.0;
};

/// FA from eigenvalues; 0 when all eigenvalues are 0. Not clamped, so
/// indefinite tensors can exceed 1 (bounded by sqrt(3/2)).
double fractional_anisotropy(const Eigen::Vector3d& lambdas);

/// AD = l1, MD = mean, RD = (l2 + l3) / 2, FA. Eigenvalues are used as given
/// after sorting descending; negative values are not clamped.
ScalarMetrics scalar_metrics(const EigenSystem& e);
ScalarMetrics scalar_metrics(const DiffusionTensor& t);

}  // namespace dtigeo
