#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "dtigeo/gradscheme.hpp"
#include "dtigeo/tensor.hpp"
#include "dtigeo/volume.hpp"

namespace dtigeo {

/// Tensor field on a 3D grid, voxels x-fastest like Volume.
struct TensorVolume {
  std::array<std::size_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  std::vector<DiffusionTensor> tensors;
  /// Optional voxel mask; empty means every voxel.
  std::vector<std::uint8_t> mask;
  /// Per-voxel fit failure flags (empty when the field was not fitted).
  std::vector<std::uint8_t> invalid;
  std::size_t invalid_voxels = 0;

  static TensorVolume zeros(const std::array<std::size_t, 3>& dims);
  /// Zero field on the spatial grid of `ref`.
  static TensorVolume like(const Volume& ref);

  std::size_t size() const { return tensors.size(); }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + dims[0] * (y + dims[1] * z); }
};

/// 4D volume with 6 frames in [Dxx, Dxy, Dxz, Dyy, Dyz, Dzz] order.
Volume to_volume(const TensorVolume& field, DataType dtype = DataType::float32);
/// Inverse of to_volume; FormatError unless the volume has exactly 6 frames.
TensorVolume tensor_volume_from(const Volume& v);

struct ScalarMaps {
  Volume fa, md, ad, rd;
};

ScalarMaps scalar_maps(const TensorVolume& field, unsigned threads = 1);

/// [gx^2, 2gxgy, 2gxgz, gy^2, 2gygz, gz^2]; FormatError for non-unit g.
TensorCoefficients design_row(const Eigen::Vector3d& g);

/// S0 * exp(-b g^T D g) for every entry of the scheme.
std::vector<double> simulate_signals(const DiffusionTensor& t, const GradientScheme& scheme, double s0);

struct VoxelFit {
  DiffusionTensor tensor;
  bool valid = true;
};

/// Log-linear least-squares tensor fit for one gradient scheme.
///
/// The normal matrix G^T G is factorised once at construction, so one fitter
/// serves every voxel of a volume. b = 0 signals are averaged into S0 before
/// the log transform.
class TensorFitter {
 public:
  /// NumericalError when the scheme has no b = 0 entry or its diffusion-weighted
  /// design rows do not span all 6 coefficients.
  explicit TensorFitter(GradientScheme scheme);

  /// Any nonpositive or non-finite signal yields {zero tensor, valid = false}.
  VoxelFit fit(std::span<const double> signals) const;

  const GradientScheme& scheme() const { return scheme_; }

 private:
  GradientScheme scheme_;
  std::vector<std::size_t> b0_;
  std::vector<std::size_t> weighted_;
  Eigen::Matrix<double, Eigen::Dynamic, 6> design_;
  Eigen::LLT<Eigen::Matrix<double, 6, 6>> normal_;
};

VoxelFit fit_voxel(std::span<const double> signals, const GradientScheme& scheme);

/// Fits every masked voxel of a 4D DWI volume (frames = scheme entries).
/// Unmasked voxels are zero. Results do not depend on `threads`.
TensorVolume fit_volume(const Volume& dwi, const GradientScheme& scheme, const Volume& mask, unsigned threads = 1);

}  // namespace dtigeo
