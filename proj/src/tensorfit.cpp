#include "dtigeo/tensorfit.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "dtigeo/error.hpp"
#include "dtigeo/numeric.hpp"

namespace dtigeo {

TensorVolume TensorVolume::zeros(const std::array<std::size_t, 3>& dims) {
  TensorVolume field;
  field.dims = dims;
  field.tensors.assign(dims[0] * dims[1] * dims[2], DiffusionTensor{});
  return field;
}

TensorVolume TensorVolume::like(const Volume& ref) {
  TensorVolume field = zeros(ref.spatial());
  field.spacing = {ref.spacing[0], ref.spacing[1], ref.spacing[2]};
  field.affine = ref.affine;
  return field;
}

Volume to_volume(const TensorVolume& field, DataType dtype) {
  Volume v = Volume::zeros(field.dims, 6);
  v.spacing = {field.spacing[0], field.spacing[1], field.spacing[2], 1.0};
  v.affine = field.affine;
  v.dtype = dtype;
  for (std::size_t i = 0; i < field.size(); ++i)
    for (std::size_t c = 0; c < 6; ++c) v.sample(i, c) = field.tensors[i].d[static_cast<Eigen::Index>(c)];
  return v;
}

TensorVolume tensor_volume_from(const Volume& v) {
  if (v.frames() != 6)
    throw FormatError("tensor volume must have 6 components, found " + std::to_string(v.frames()));
  TensorVolume field = TensorVolume::like(v);
  for (std::size_t i = 0; i < field.size(); ++i)
    for (std::size_t c = 0; c < 6; ++c) field.tensors[i].d[static_cast<Eigen::Index>(c)] = v.sample(i, c);
  return field;
}

ScalarMaps scalar_maps(const TensorVolume& field, unsigned threads) {
  Volume ref = Volume::zeros(field.dims);
  ref.spacing = {field.spacing[0], field.spacing[1], field.spacing[2], 1.0};
  ref.affine = field.affine;
  ScalarMaps maps{ref, ref, ref, ref};
  parallel_for(field.size(), threads, [&](std::size_t i) {
    const auto m = scalar_metrics(field.tensors[i]);
    maps.fa.data[i] = m.fa;
    maps.md.data[i] = m.md;
    maps.ad.data[i] = m.ad;
    maps.rd.data[i] = m.rd;
  });
  return maps;
}

TensorCoefficients design_row(const Eigen::Vector3d& g) {
  if (std::abs(g.norm() - 1.0) > 1e-6) throw FormatError("design_row needs a unit gradient direction");
  TensorCoefficients row;
  row << g.x() * g.x(), 2.0 * g.x() * g.y(), 2.0 * g.x() * g.z(), g.y() * g.y(), 2.0 * g.y() * g.z(), g.z() * g.z();
  return row;
}

std::vector<double> simulate_signals(const DiffusionTensor& t, const GradientScheme& scheme, double s0) {
  const Eigen::Matrix3d d = t.matrix();
  std::vector<double> signals(scheme.size());
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    const auto& e = scheme[i];
    signals[i] = e.bval == 0.0 ? s0 : s0 * std::exp(-e.bval * e.bvec.dot(d * e.bvec));
  }
  return signals;
}

TensorFitter::TensorFitter(GradientScheme scheme)
    : scheme_(std::move(scheme)), b0_(scheme_.b0_indices()), weighted_(scheme_.weighted_indices()) {
  if (b0_.empty()) throw NumericalError("tensor fit needs at least one b=0 volume");
  if (weighted_.size() < 6)
    throw NumericalError("tensor fit needs at least 6 diffusion-weighted directions, found " +
                         std::to_string(weighted_.size()));
  design_.resize(static_cast<Eigen::Index>(weighted_.size()), 6);
  for (std::size_t k = 0; k < weighted_.size(); ++k)
    design_.row(static_cast<Eigen::Index>(k)) = design_row(scheme_[weighted_[k]].bvec).transpose();

  const Eigen::Matrix<double, 6, 6> normal = design_.transpose() * design_;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> spectrum(normal, Eigen::EigenvaluesOnly);
  const auto& ev = spectrum.eigenvalues();
  if (!(ev.minCoeff() > 1e-10 * ev.maxCoeff())) throw NumericalError("gradient design matrix is rank deficient");
  normal_.compute(normal);
  if (normal_.info() != Eigen::Success) throw NumericalError("gradient design matrix is rank deficient");
}

VoxelFit TensorFitter::fit(std::span<const double> signals) const {
  if (signals.size() != scheme_.size())
    throw FormatError("expected " + std::to_string(scheme_.size()) + " signals, got " +
                      std::to_string(signals.size()));
  for (double s : signals)
    if (!(s > 0.0) || !std::isfinite(s)) return {DiffusionTensor{}, false};

  double s0 = 0.0;
  for (std::size_t i : b0_) s0 += signals[i];
  const double log_s0 = std::log(s0 / static_cast<double>(b0_.size()));

  Eigen::VectorXd target(static_cast<Eigen::Index>(weighted_.size()));
  for (std::size_t k = 0; k < weighted_.size(); ++k) {
    const std::size_t i = weighted_[k];
    target[static_cast<Eigen::Index>(k)] = (log_s0 - std::log(signals[i])) / scheme_[i].bval;
  }
  const TensorCoefficients rhs = design_.transpose() * target;
  return {DiffusionTensor(normal_.solve(rhs)), true};
}

VoxelFit fit_voxel(std::span<const double> signals, const GradientScheme& scheme) {
  return TensorFitter(scheme).fit(signals);
}

TensorVolume fit_volume(const Volume& dwi, const GradientScheme& scheme, const Volume& mask, unsigned threads) {
  if (dwi.frames() != scheme.size())
    throw FormatError("DWI has " + std::to_string(dwi.frames()) + " volumes but the gradient table has " +
                      std::to_string(scheme.size()) + " entries");
  if (!same_spatial_dims(dwi, mask)) throw FormatError("mask dimensions do not match the DWI volume");

  const TensorFitter fitter(scheme);
  TensorVolume field = TensorVolume::like(dwi);
  field.mask = mask_flags(mask);
  field.invalid.assign(field.size(), 0);

  const std::size_t frames = dwi.frames();
  parallel_for(field.size(), threads, [&](std::size_t voxel) {
    if (!field.mask[voxel]) return;
    std::vector<double> signals(frames);
    for (std::size_t t = 0; t < frames; ++t) signals[t] = dwi.sample(voxel, t);
    const VoxelFit result = fitter.fit(signals);
    field.tensors[voxel] = result.tensor;
    field.invalid[voxel] = result.valid ? 0 : 1;
  });
  for (std::uint8_t flag : field.invalid) field.invalid_voxels += flag;
  return field;
}

}  // namespace dtigeo
