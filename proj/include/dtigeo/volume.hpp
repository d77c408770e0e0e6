#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace dtigeo {

/// On-disk sample type of a volume. In memory, samples are always double.
enum class DataType { uint8, int16, float32, float64 };

std::string_view to_string(DataType type);
DataType parse_data_type(std::string_view name);

/// Up to 4D image: three spatial axes plus an optional frame axis (DWI volumes,
/// tensor components). Samples are stored x-fastest, then y, z, frame, which
/// is the NIfTI on-disk order.
struct Volume {
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  int ndim = 3;
  std::array<double, 4> spacing{1.0, 1.0, 1.0, 1.0};
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  DataType dtype = DataType::float32;
  std::vector<double> data;

  /// Zero-filled volume; 4D when frames > 1.
  static Volume zeros(const std::array<std::size_t, 3>& spatial, std::size_t frames = 1);
  /// Zero-filled volume sharing the spatial geometry of `ref`.
  static Volume like(const Volume& ref, std::size_t frames = 1);

  std::size_t voxels() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t frames() const { return dims[3]; }
  std::array<std::size_t, 3> spatial() const { return {dims[0], dims[1], dims[2]}; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z, std::size_t t = 0) const {
    return x + dims[0] * (y + dims[1] * (z + dims[2] * t));
  }
  double& at(std::size_t x, std::size_t y, std::size_t z, std::size_t t = 0) { return data[index(x, y, z, t)]; }
  double at(std::size_t x, std::size_t y, std::size_t z, std::size_t t = 0) const { return data[index(x, y, z, t)]; }
  /// Sample `t` of linear voxel index `voxel`.
  double& sample(std::size_t voxel, std::size_t t) { return data[voxel + voxels() * t]; }
  double sample(std::size_t voxel, std::size_t t) const { return data[voxel + voxels() * t]; }

  /// Throws FormatError on non-positive dims, wrong data length or singular affine.
  void validate() const;
};

bool same_spatial_dims(const Volume& a, const Volume& b);

/// Nonzero samples of the first frame, one flag per voxel.
std::vector<std::uint8_t> mask_flags(const Volume& mask);

/// Copy of `v` keeping only the listed frames, in order.
Volume select_frames(const Volume& v, std::span<const std::size_t> frames);

/// Diagonal voxel-to-world transform for the given spacing.
Eigen::Matrix4d spacing_affine(const std::array<double, 3>& spacing);

}  // namespace dtigeo
