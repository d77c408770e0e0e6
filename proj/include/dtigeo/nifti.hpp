#pragma once

#include <filesystem>

#include "dtigeo/volume.hpp"

namespace dtigeo {

/// Reads a single-file NIfTI-1 image (.nii, or gzip-compressed .nii.gz).
///
/// Either byte order is accepted (detected from dim[0]). Samples are scaled by
/// scl_slope/scl_inter when the slope is nonzero. The affine comes from the
/// sform when sform_code > 0, else the qform, else the voxel spacing. Frame
/// dimensions beyond the 4th are folded into the frame axis.
Volume read_nifti(const std::filesystem::path& path);

/// Writes `v` as NIfTI-1 in native byte order with the given sample type,
/// gzip-compressed when the path ends in ".gz". Both qform and sform are set.
/// Integer types throw FormatError when a rounded value does not fit.
void write_nifti(const Volume& v, const std::filesystem::path& path, DataType dtype);
inline void write_nifti(const Volume& v, const std::filesystem::path& path) { write_nifti(v, path, v.dtype); }

}  // namespace dtigeo
