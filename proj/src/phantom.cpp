#include "dtigeo/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <string>

#include <Eigen/Geometry>

#include "dtigeo/error.hpp"
#include "dtigeo/nifti.hpp"
#include "dtigeo/numeric.hpp"

namespace dtigeo {

namespace {

constexpr std::uint64_t scheme_seed = 0x5eedULL;

DiffusionTensor oriented(const Eigen::Matrix3d& rotation, double l1, double l2, double l3) {
  const Eigen::Vector3d l(l1, l2, l3);
  return DiffusionTensor::from_matrix(rotation * l.asDiagonal() * rotation.transpose());
}

// Rotation by a random angle up to `max_angle` about a random axis.
Eigen::Matrix3d small_tilt(Rng& rng, double max_angle) {
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(rng.uniform(0.0, max_angle), axis.normalized()).toRotationMatrix();
}

DiffusionTensor crossing_voxel(const std::array<std::size_t, 3>& shape, std::size_t x, std::size_t y, Rng& rng) {
  const bool bundle_x = y < (5 * shape[1]) / 8;  // fibres along x
  const bool bundle_y = x < (5 * shape[0]) / 8;  // fibres along y
  const double jitter1 = rng.uniform(0.95, 1.05);
  const double jitter2 = rng.uniform(0.95, 1.05);
  const double jitter3 = rng.uniform(0.95, 1.05);
  const Eigen::Matrix3d tilt = small_tilt(rng, 10.0 * std::numbers::pi / 180.0);
  Eigen::Matrix3d frame = Eigen::Matrix3d::Identity();
  if (bundle_x && bundle_y) return oriented(tilt, 1.2e-3 * jitter1, 1.2e-3 * jitter2, 0.4e-3 * jitter3);
  if (bundle_x) return oriented(tilt, 1.7e-3 * jitter1, 0.35e-3 * jitter2, 0.35e-3 * jitter3);
  if (bundle_y) {
    frame << 0, 1, 0,
             1, 0, 0,
             0, 0, 1;
    return oriented(tilt * frame, 1.7e-3 * jitter1, 0.35e-3 * jitter2, 0.35e-3 * jitter3);
  }
  const double md = 0.9e-3 * jitter1;
  return DiffusionTensor::diagonal(md, md, md);
}

}  // namespace

PhantomKind parse_phantom_kind(std::string_view name) {
  if (name == "isotropic") return PhantomKind::isotropic;
  if (name == "crossing") return PhantomKind::crossing;
  if (name == "gradient-fa") return PhantomKind::gradient_fa;
  throw FormatError("unknown phantom kind \"" + std::string(name) + "\"");
}

std::string_view to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::isotropic: return "isotropic";
    case PhantomKind::crossing: return "crossing";
    case PhantomKind::gradient_fa: return "gradient-fa";
  }
  return "unknown";
}

GradientScheme phantom_scheme(std::size_t directions, double bval) {
  return make_scheme(1, bval, electrostatic_directions(directions, scheme_seed));
}

Phantom synth_phantom(const PhantomOptions& options) {
  for (std::size_t extent : options.shape)
    if (extent < 4) throw FormatError("phantom extents must be at least 4");
  if (options.snr && !(*options.snr > 0.0)) throw FormatError("phantom SNR must be positive");

  Phantom ph;
  ph.scheme = phantom_scheme(options.directions, options.bval);
  ph.mask = Volume::zeros(options.shape);
  ph.mask.spacing = {2.0, 2.0, 2.0, 1.0};
  ph.mask.affine = spacing_affine({2.0, 2.0, 2.0});
  for (int axis = 0; axis < 3; ++axis)
    ph.mask.affine(axis, 3) = -static_cast<double>(options.shape[axis] - 1);
  ph.mask.dtype = DataType::uint8;
  std::fill(ph.mask.data.begin(), ph.mask.data.end(), 1.0);

  ph.gt = TensorVolume::like(ph.mask);
  ph.gt.mask = mask_flags(ph.mask);
  const auto& shape = options.shape;
  Rng rng(options.seed);
  for (std::size_t z = 0; z < shape[2]; ++z)
    for (std::size_t y = 0; y < shape[1]; ++y)
      for (std::size_t x = 0; x < shape[0]; ++x) {
        DiffusionTensor& t = ph.gt.tensors[ph.gt.index(x, y, z)];
        switch (options.kind) {
          case PhantomKind::isotropic: {
            const double md = rng.uniform(0.6e-3, 1.0e-3);
            t = DiffusionTensor::diagonal(md, md, md);
            break;
          }
          case PhantomKind::crossing:
            t = crossing_voxel(shape, x, y, rng);
            break;
          case PhantomKind::gradient_fa: {
            const double s = 0.8 * static_cast<double>(x) / static_cast<double>(shape[0] - 1);
            const double md = 0.7e-3 * rng.uniform(0.9, 1.1);
            t = oriented(random_rotation(rng), md * (1.0 + 2.0 * s), md * (1.0 - s), md * (1.0 - s));
            break;
          }
        }
      }

  ph.dwi = Volume::like(ph.mask, ph.scheme.size());
  ph.dwi.ndim = 4;
  ph.dwi.dtype = DataType::float64;
  const double sigma = options.snr ? options.s0 / *options.snr : 0.0;
  for (std::size_t voxel = 0; voxel < ph.gt.size(); ++voxel) {
    const auto clean = simulate_signals(ph.gt.tensors[voxel], ph.scheme, options.s0);
    for (std::size_t t = 0; t < clean.size(); ++t) {
      double s = clean[t];
      if (options.snr) {
        const double re = s + sigma * rng.normal();
        const double im = sigma * rng.normal();
        s = std::hypot(re, im);
      }
      ph.dwi.sample(voxel, t) = s;
    }
  }
  return ph;
}

void write_phantom(const Phantom& phantom, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir.string());
  write_nifti(phantom.dwi, dir / "dwi.nii.gz", DataType::float64);
  write_nifti(to_volume(phantom.gt, DataType::float64), dir / "tensor.nii.gz", DataType::float64);
  write_nifti(phantom.mask, dir / "mask.nii.gz", DataType::uint8);
  const auto [bvecs, bvals] = format_fsl_tables(phantom.scheme);
  for (const auto& [name, text] : {std::pair{"bvecs", bvecs}, std::pair{"bvals", bvals}}) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw InputError("cannot write " + (dir / name).string());
  }
}

}  // namespace dtigeo
