#include "dtigeo/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/LU>

#include "dtigeo/error.hpp"

namespace dtigeo {

std::string_view to_string(DataType type) {
  switch (type) {
    case DataType::uint8: return "uint8";
    case DataType::int16: return "int16";
    case DataType::float32: return "float32";
    case DataType::float64: return "float64";
  }
  return "unknown";
}

DataType parse_data_type(std::string_view name) {
  if (name == "uint8") return DataType::uint8;
  if (name == "int16") return DataType::int16;
  if (name == "float32") return DataType::float32;
  if (name == "float64") return DataType::float64;
  throw FormatError("unsupported data type \"" + std::string(name) + "\"");
}

Volume Volume::zeros(const std::array<std::size_t, 3>& spatial, std::size_t frames) {
  Volume v;
  v.dims = {spatial[0], spatial[1], spatial[2], frames};
  v.ndim = frames > 1 ? 4 : 3;
  v.data.assign(spatial[0] * spatial[1] * spatial[2] * frames, 0.0);
  return v;
}

Volume Volume::like(const Volume& ref, std::size_t frames) {
  Volume v = zeros(ref.spatial(), frames);
  v.spacing = ref.spacing;
  v.affine = ref.affine;
  v.dtype = ref.dtype;
  return v;
}

void Volume::validate() const {
  if (ndim < 1 || ndim > 4) throw FormatError("volume rank must be 1..4");
  std::size_t total = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw FormatError("volume dimensions must be positive");
    total *= d;
  }
  if (data.size() != total)
    throw FormatError("volume data length " + std::to_string(data.size()) + " does not match dimensions (" +
                      std::to_string(total) + ")");
  const double det = affine.topLeftCorner<3, 3>().determinant();
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw FormatError("volume affine is singular");
}

bool same_spatial_dims(const Volume& a, const Volume& b) { return a.spatial() == b.spatial(); }

std::vector<std::uint8_t> mask_flags(const Volume& mask) {
  std::vector<std::uint8_t> flags(mask.voxels());
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = mask.data[i] != 0.0 ? 1 : 0;
  return flags;
}

Volume select_frames(const Volume& v, std::span<const std::size_t> frames) {
  Volume out = Volume::like(v, frames.size());
  out.ndim = frames.size() > 1 ? 4 : 3;
  out.spacing = v.spacing;
  const std::size_t n = v.voxels();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f] >= v.frames()) throw FormatError("frame index " + std::to_string(frames[f]) + " out of range");
    std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(frames[f] * n), n,
                out.data.begin() + static_cast<std::ptrdiff_t>(f * n));
  }
  return out;
}

Eigen::Matrix4d spacing_affine(const std::array<double, 3>& spacing) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
  for (int i = 0; i < 3; ++i) a(i, i) = spacing[i];
  return a;
}

}  // namespace dtigeo
