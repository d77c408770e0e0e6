#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace dtigeo {

/// One diffusion-weighted volume: b-value in s/mm^2 and unit gradient direction.
/// b = 0 entries carry the zero direction.
struct GradientEntry {
  double bval = 0.0;
  Eigen::Vector3d bvec = Eigen::Vector3d::Zero();
};

/// Ordered gradient table, one entry per acquired volume.
///
/// Construction validates that every b > 0 direction is unit length (to 1e-6)
/// and every b = 0 entry has the zero direction. Immutable afterwards.
class GradientScheme {
 public:
  GradientScheme() = default;
  explicit GradientScheme(std::vector<GradientEntry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const GradientEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<GradientEntry>& entries() const { return entries_; }

  std::vector<std::size_t> b0_indices() const;
  std::vector<std::size_t> weighted_indices() const;
  bool has_b0() const;

  /// New scheme made of the given entries, in the given order.
  GradientScheme subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<GradientEntry> entries_;
};

/// Indices into a GradientScheme plus the minimum pairwise antipodal angle
/// (radians) among the selected directions.
struct SubsetSelection {
  std::vector<std::size_t> indices;
  double spread = 0.0;
};

/// Parses FSL bvecs (3 rows x N) and bvals (1 row x N) text.
///
/// Directions of b > 0 entries whose norm is within 1e-3 of one are
/// renormalised; larger deviations are an error. b = 0 directions are zeroed.
GradientScheme parse_fsl_tables(std::string_view bvec_text, std::string_view bval_text);

/// Inverse of parse_fsl_tables, shortest round-trip number formatting.
/// Returns {bvecs, bvals}.
std::pair<std::string, std::string> format_fsl_tables(const GradientScheme& scheme);

/// arccos(min(1, |g1 . g2|)): angle between axes, in [0, pi/2].
/// Throws FormatError if either input deviates from unit norm by more than 1e-6.
double angular_distance(const Eigen::Vector3d& g1, const Eigen::Vector3d& g2);

/// Greedy max-min (Kennard-Stone) selection of k of the b > 0 directions.
///
/// Seeds with the pair at maximum angular distance (lowest index pair on ties),
/// then repeatedly adds the candidate whose distance to the nearest selected
/// direction is largest (lowest index on ties). The returned indices are in
/// selection order.
SubsetSelection kennard_stone_select(const GradientScheme& scheme, std::size_t k);

/// Minimum pairwise angular distance among the given entries of the scheme.
double selection_spread(const GradientScheme& scheme, std::span<const std::size_t> indices);

/// All b = 0 indices followed by the selected indices, ascending: the volumes a
/// tensor fit of the subset needs.
std::vector<std::size_t> fitting_indices(const GradientScheme& scheme, const SubsetSelection& selection);

/// Index file: a "# spread=<radians>" header line then one 0-based index per line.
std::string format_selection(const SubsetSelection& selection);
SubsetSelection parse_selection(std::string_view text);

/// n directions spread over the hemisphere by antipodally symmetric
/// electrostatic repulsion, starting from a seeded random configuration.
std::vector<Eigen::Vector3d> electrostatic_directions(std::size_t n, std::uint64_t seed);

/// `b0_count` b = 0 entries followed by the given directions at b-value `bval`.
GradientScheme make_scheme(std::size_t b0_count, double bval, const std::vector<Eigen::Vector3d>& directions);

/// b0 followed by the six axis and face-diagonal directions at b = 1000.
GradientScheme canonical_six_direction_scheme();

}  // namespace dtigeo
