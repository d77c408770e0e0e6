#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dtigeo/tensorfit.hpp"
#include "dtigeo/volume.hpp"

namespace dtigeo {

struct MaeStat {
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Mean and population SD of |a - b| over masked voxels. Multi-frame volumes
/// average the absolute difference over frames first. FormatError on shape
/// mismatch or an empty mask.
MaeStat masked_mae(const Volume& a, const Volume& b, const Volume& mask);

/// Mean over masked voxels of the local SSIM map.
///
/// Local statistics use a 7x7x7 uniform window, truncated at the volume border
/// and renormalised over the voxels it covers. C1 = (0.01 L)^2 and
/// C2 = (0.03 L)^2 with L the larger of the two value ranges over the mask.
/// Multi-frame volumes average the per-frame SSIM. A zero range gives 1 when
/// both volumes hold the same constant and NumericalError otherwise.
double ssim3d(const Volume& a, const Volume& b, const Volume& mask, unsigned threads = 1);

struct TractEntry {
  std::string name;
  std::size_t voxels = 0;
  /// Absent when the tract mask is empty.
  std::optional<MaeStat> fa;
};

using NamedMasks = std::vector<std::pair<std::string, Volume>>;

std::vector<TractEntry> tract_fa_report(const Volume& pred_fa, const Volume& gt_fa, const NamedMasks& tracts);

/// Every .nii / .nii.gz file in `dir`, sorted by file name; the tract name is
/// the file name without its extension.
NamedMasks load_tract_masks(const std::filesystem::path& dir);

struct EvalReport {
  /// Keys dti, fa, md, ad, rd.
  std::map<std::string, MaeStat> mae;
  std::map<std::string, double> ssim;
  std::vector<TractEntry> tracts;
};

EvalReport evaluate_tensors(const TensorVolume& pred, const TensorVolume& gt, const Volume& mask,
                            const NamedMasks& tracts = {}, unsigned threads = 1);

void to_json(nlohmann::json& j, const MaeStat& s);
void to_json(nlohmann::json& j, const EvalReport& r);

/// "section,name,mean,std" rows.
std::string format_report_csv(const EvalReport& r);
/// "name,value" rows of per-tract FA MAE; absent tracts are written as "nan".
std::string format_tract_bars(const EvalReport& r);

}  // namespace dtigeo
