#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "dtigeo/tensor.hpp"
#include "dtigeo/tensorfit.hpp"
#include "dtigeo/volume.hpp"

namespace dtigeo {

/// Sum of the three 2x2 principal minors: xx*yy - xy^2 + xx*zz - xz^2 + yy*zz - yz^2.
double delta2(const DiffusionTensor& t);
/// Determinant of the full tensor.
double delta3(const DiffusionTensor& t);

/// d(delta2)/d(coefficients). Off-diagonal coefficients count both symmetric entries.
TensorCoefficients delta2_gradient(const DiffusionTensor& t);
/// d(det)/d(coefficients) from the cofactor matrix.
TensorCoefficients delta3_gradient(const DiffusionTensor& t);
/// d(FA)/d(coefficients) through dl_i/dD = v_i v_i^T. Zero where FA = 0.
TensorCoefficients fa_gradient(const DiffusionTensor& t);

/// Volume-change penalty: rho if rho >= 1, else 1/rho. NumericalError for
/// rho <= 0 or non-finite rho.
double xi(double rho);
/// The same penalty in its rectified form, (1/rho) relu(1 - rho) + relu(rho - 1) + 1.
double xi_relu(double rho);
/// d(xi)/d(rho) on the active branch; the rho >= 1 branch owns rho = 1.
double xi_derivative(double rho);

struct LossWeights {
  double alpha = 1e6;
  double beta = 1e6;
  double gamma = 10.0;

  /// FormatError for negative or non-finite weights.
  void validate() const;
};

/// Loss terms of one voxel. A voxel is degenerate when either determinant is
/// below 1e-30 in magnitude or their ratio is not positive and finite; it then
/// keeps only the gamma * l_fa term.
struct VoxelLoss {
  double l_dti = 0.0;
  double l_delta2 = 0.0;
  double l_fa = 0.0;
  double rho = 1.0;
  double xi = 1.0;
  bool degenerate = false;
  double total = 0.0;
  TensorCoefficients grad = TensorCoefficients::Zero();
};

VoxelLoss voxel_loss(const DiffusionTensor& pred, const DiffusionTensor& gt, const LossWeights& w,
                     bool with_gradient = true);

struct LossReport {
  double l_dti = 0.0;
  double l_delta2 = 0.0;
  double l_fa = 0.0;
  double xi_mean = 1.0;  // over non-degenerate voxels
  double l_geo = 0.0;
  std::size_t voxels = 0;
  std::size_t degenerate_voxels = 0;
  LossWeights weights;
  /// d(l_geo)/d(pred coefficients) per voxel of the field; zero outside the mask.
  std::vector<TensorCoefficients> grad;
};

struct LossOptions {
  bool gradient = true;
  unsigned threads = 1;
};

/// Geometry-constrained loss between a predicted and a reference tensor field.
///
/// Every masked voxel v contributes
///   xi_v * (alpha * l_dti_v + beta * l_delta2_v) + gamma * l_fa_v
/// and l_geo is the mean over masked voxels (fixed-order summation). l_dti_v
/// is the mean absolute coefficient difference, l_delta2_v and l_fa_v the
/// absolute differences of delta2 and FA, and xi_v the penalty of
/// det(gt) / det(pred). L1 subgradients are 0 at ties.
///
/// FormatError on dimension mismatch or an empty mask; NumericalError when
/// every masked voxel is degenerate.
LossReport geo_loss(const TensorVolume& pred, const TensorVolume& gt, const Volume& mask, const LossWeights& w,
                    const LossOptions& options = {});

/// Gradient as a 6-component volume on the grid of `like`.
Volume gradient_volume(const LossReport& report, const TensorVolume& like);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t coefficients = 0;
  /// Coefficients whose stencil crosses a kink (an L1 tie, rho = 1 or a
  /// degeneracy change) and so have no finite-difference reference.
  std::size_t skipped = 0;
};

/// Central finite differences of l_geo against the analytic gradient.
/// Relative error per coefficient is |a - fd| / max(|a|, |fd|, 1e-6 * max|fd|).
GradientCheck check_gradient(const TensorVolume& pred, const TensorVolume& gt, const Volume& mask,
                             const LossWeights& w, double step = 1e-9);

void to_json(nlohmann::json& j, const LossWeights& w);
/// Keys l_dti, l_delta2, l_fa, xi_mean, l_geo, degenerate_voxels, weights.
void to_json(nlohmann::json& j, const LossReport& r);

}  // namespace dtigeo
