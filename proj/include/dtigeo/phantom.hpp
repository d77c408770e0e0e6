#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "dtigeo/gradscheme.hpp"
#include "dtigeo/tensorfit.hpp"
#include "dtigeo/volume.hpp"

namespace dtigeo {

enum class PhantomKind {
  isotropic,    // D = MD * I, MD drawn per voxel
  crossing,     // two orthogonal prolate bundles with an oblate overlap region
  gradient_fa,  // FA rises strictly along x, random orientation per voxel
};

PhantomKind parse_phantom_kind(std::string_view name);
std::string_view to_string(PhantomKind kind);

struct PhantomOptions {
  std::array<std::size_t, 3> shape{8, 8, 8};
  PhantomKind kind = PhantomKind::isotropic;
  std::uint64_t seed = 0;
  /// Rician noise with sigma = s0 / snr; noiseless when unset.
  std::optional<double> snr;
  double s0 = 1000.0;
  double bval = 1000.0;
  std::size_t directions = 90;
};

struct Phantom {
  Volume dwi;
  GradientScheme scheme;
  TensorVolume gt;
  Volume mask;
};

/// One b = 0 entry followed by `directions` electrostatic directions at `bval`.
/// The directions come from a fixed seed, so every phantom shares the table.
GradientScheme phantom_scheme(std::size_t directions = 90, double bval = 1000.0);

/// Deterministic for identical options. FormatError for shapes below 4.
Phantom synth_phantom(const PhantomOptions& options);

/// Writes dwi.nii.gz, bvecs, bvals, tensor.nii.gz and mask.nii.gz into `dir`.
void write_phantom(const Phantom& phantom, const std::filesystem::path& dir);

}  // namespace dtigeo
