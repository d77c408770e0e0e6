#include "dtigeo/evaluate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "dtigeo/error.hpp"
#include "dtigeo/nifti.hpp"
#include "dtigeo/numeric.hpp"

namespace dtigeo {

namespace {

constexpr int half_window = 3;

std::vector<std::size_t> masked_voxels(const Volume& mask, const Volume& like) {
  if (mask.spatial() != like.spatial()) throw FormatError("mask dimensions do not match the volumes");
  const auto flags = mask_flags(mask);
  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) voxels.push_back(i);
  if (voxels.empty()) throw FormatError("evaluation mask is empty");
  return voxels;
}

void check_pair(const Volume& a, const Volume& b) {
  if (a.spatial() != b.spatial() || a.frames() != b.frames())
    throw FormatError("compared volumes differ in shape");
}

// Sums of `values` over a window of +-3 voxels along one axis, truncated at the border.
std::vector<double> box_along(const std::vector<double>& values, const std::array<std::size_t, 3>& dims, int axis) {
  std::vector<double> out(values.size());
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
  const auto extent = static_cast<std::ptrdiff_t>(dims[static_cast<std::size_t>(axis)]);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto pos = static_cast<std::ptrdiff_t>((i / stride) % dims[static_cast<std::size_t>(axis)]);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pos - half_window);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(extent - 1, pos + half_window);
    const std::size_t base = i - static_cast<std::size_t>(pos) * stride;
    double sum = 0.0;
    for (std::ptrdiff_t p = lo; p <= hi; ++p) sum += values[base + static_cast<std::size_t>(p) * stride];
    out[i] = sum;
  }
  return out;
}

std::vector<double> box_sum(std::vector<double> values, const std::array<std::size_t, 3>& dims) {
  for (int axis = 0; axis < 3; ++axis) values = box_along(values, dims, axis);
  return values;
}

std::size_t window_count(std::size_t pos, std::size_t extent) {
  const std::size_t lo = pos >= half_window ? pos - half_window : 0;
  const std::size_t hi = std::min(extent - 1, pos + half_window);
  return hi - lo + 1;
}

double frame_ssim(const Volume& a, const Volume& b, std::size_t frame, const std::vector<std::size_t>& voxels,
                  unsigned threads) {
  const std::size_t n = a.voxels();
  const double* pa = a.data.data() + frame * n;
  const double* pb = b.data.data() + frame * n;

  double a_lo = std::numeric_limits<double>::infinity(), a_hi = -a_lo;
  double b_lo = a_lo, b_hi = -a_lo;
  for (std::size_t v : voxels) {
    a_lo = std::min(a_lo, pa[v]);
    a_hi = std::max(a_hi, pa[v]);
    b_lo = std::min(b_lo, pb[v]);
    b_hi = std::max(b_hi, pb[v]);
  }
  const double range = std::max(a_hi - a_lo, b_hi - b_lo);
  if (range == 0.0) {
    if (a_lo == b_lo) return 1.0;
    throw NumericalError("SSIM undefined: volumes are different constants over the mask");
  }
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  // Shifting both volumes by one constant leaves the second moments unchanged
  // and keeps E[x^2] - E[x]^2 well conditioned.
  const double offset = 0.5 * (a_lo + b_lo);
  std::vector<double> sa(n), sb(n), saa(n), sbb(n), sab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pa[i] - offset;
    const double y = pb[i] - offset;
    sa[i] = x;
    sb[i] = y;
    saa[i] = x * x;
    sbb[i] = y * y;
    sab[i] = x * y;
  }
  const auto dims = a.spatial();
  std::array<std::vector<double>*, 5> fields{&sa, &sb, &saa, &sbb, &sab};
  parallel_for(fields.size(), threads, [&](std::size_t k) { *fields[k] = box_sum(std::move(*fields[k]), dims); });

  std::vector<double> local(voxels.size());
  parallel_for(voxels.size(), threads, [&](std::size_t k) {
    const std::size_t v = voxels[k];
    const std::size_t x = v % dims[0];
    const std::size_t y = (v / dims[0]) % dims[1];
    const std::size_t z = v / (dims[0] * dims[1]);
    const double count = static_cast<double>(window_count(x, dims[0]) * window_count(y, dims[1]) *
                                             window_count(z, dims[2]));
    const double ma = sa[v] / count;
    const double mb = sb[v] / count;
    const double va = saa[v] / count - ma * ma;
    const double vb = sbb[v] / count - mb * mb;
    const double cov = sab[v] / count - ma * mb;
    const double mua = ma + offset;
    const double mub = mb + offset;
    local[k] = ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) / ((mua * mua + mub * mub + c1) * (va + vb + c2));
  });
  return pairwise_mean(local);
}

Volume frames_of(const TensorVolume& field) { return to_volume(field, DataType::float64); }

}  // namespace

MaeStat masked_mae(const Volume& a, const Volume& b, const Volume& mask) {
  check_pair(a, b);
  const auto voxels = masked_voxels(mask, a);
  const std::size_t frames = a.frames();
  std::vector<double> diff(voxels.size());
  for (std::size_t k = 0; k < voxels.size(); ++k) {
    double sum = 0.0;
    for (std::size_t t = 0; t < frames; ++t) sum += std::abs(a.sample(voxels[k], t) - b.sample(voxels[k], t));
    diff[k] = sum / static_cast<double>(frames);
  }
  MaeStat out;
  out.mean = pairwise_mean(diff);
  std::vector<double> sq(diff.size());
  for (std::size_t k = 0; k < diff.size(); ++k) sq[k] = (diff[k] - out.mean) * (diff[k] - out.mean);
  out.std = std::sqrt(pairwise_mean(sq));
  return out;
}

double ssim3d(const Volume& a, const Volume& b, const Volume& mask, unsigned threads) {
  check_pair(a, b);
  const auto voxels = masked_voxels(mask, a);
  std::vector<double> per_frame;
  for (std::size_t t = 0; t < a.frames(); ++t) per_frame.push_back(frame_ssim(a, b, t, voxels, threads));
  return pairwise_mean(per_frame);
}

std::vector<TractEntry> tract_fa_report(const Volume& pred_fa, const Volume& gt_fa, const NamedMasks& tracts) {
  check_pair(pred_fa, gt_fa);
  std::vector<TractEntry> out;
  for (const auto& [name, mask] : tracts) {
    if (mask.spatial() != pred_fa.spatial()) throw FormatError("tract mask " + name + " does not match the volumes");
    TractEntry entry;
    entry.name = name;
    const auto flags = mask_flags(mask);
    entry.voxels = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
    if (entry.voxels > 0) entry.fa = masked_mae(pred_fa, gt_fa, mask);
    out.push_back(std::move(entry));
  }
  return out;
}

NamedMasks load_tract_masks(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw InputError("missing input: tract directory " + dir.string());
  std::vector<std::pair<std::string, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string file = entry.path().filename().string();
    for (const std::string ext : {".nii.gz", ".nii"}) {
      if (file.size() > ext.size() && file.ends_with(ext)) {
        files.emplace_back(file.substr(0, file.size() - ext.size()), entry.path());
        break;
      }
    }
  }
  std::sort(files.begin(), files.end());
  NamedMasks masks;
  for (const auto& [name, path] : files) masks.emplace_back(name, read_nifti(path));
  return masks;
}

EvalReport evaluate_tensors(const TensorVolume& pred, const TensorVolume& gt, const Volume& mask,
                            const NamedMasks& tracts, unsigned threads) {
  if (pred.dims != gt.dims) throw FormatError("predicted and reference fields differ in size");
  const Volume pred_frames = frames_of(pred);
  const Volume gt_frames = frames_of(gt);
  const ScalarMaps pm = scalar_maps(pred, threads);
  const ScalarMaps gm = scalar_maps(gt, threads);

  EvalReport r;
  const std::array<std::pair<const char*, std::pair<const Volume*, const Volume*>>, 5> pairs{{
      {"dti", {&pred_frames, &gt_frames}},
      {"fa", {&pm.fa, &gm.fa}},
      {"md", {&pm.md, &gm.md}},
      {"ad", {&pm.ad, &gm.ad}},
      {"rd", {&pm.rd, &gm.rd}},
  }};
  for (const auto& [name, vols] : pairs) {
    r.mae[name] = masked_mae(*vols.first, *vols.second, mask);
    r.ssim[name] = ssim3d(*vols.first, *vols.second, mask, threads);
  }
  r.tracts = tract_fa_report(pm.fa, gm.fa, tracts);
  return r;
}

void to_json(nlohmann::json& j, const MaeStat& s) { j = nlohmann::json{{"mean", s.mean}, {"std", s.std}}; }

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json::object();
  j["mae"] = r.mae;
  j["ssim"] = r.ssim;
  j["tracts"] = nlohmann::json::object();
  for (const TractEntry& t : r.tracts) {
    if (t.fa)
      j["tracts"][t.name] = nlohmann::json{{"fa_mae", t.fa->mean}, {"fa_std", t.fa->std}, {"voxels", t.voxels}};
    else
      j["tracts"][t.name] = nullptr;
  }
}

std::string format_report_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "section,name,mean,std\n";
  for (const auto& [name, s] : r.mae) out << "mae," << name << ',' << s.mean << ',' << s.std << '\n';
  for (const auto& [name, v] : r.ssim) out << "ssim," << name << ',' << v << ",\n";
  for (const TractEntry& t : r.tracts) {
    out << "tract_fa," << t.name << ',';
    if (t.fa)
      out << t.fa->mean << ',' << t.fa->std << '\n';
    else
      out << "nan,nan\n";
  }
  return out.str();
}

std::string format_tract_bars(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "name,value\n";
  for (const TractEntry& t : r.tracts) {
    out << t.name << ',';
    if (t.fa)
      out << t.fa->mean << '\n';
    else
      out << "nan\n";
  }
  return out.str();
}

}  // namespace dtigeo
