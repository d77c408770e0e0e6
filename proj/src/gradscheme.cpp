#include "dtigeo/gradscheme.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "dtigeo/error.hpp"
#include "dtigeo/numeric.hpp"

namespace dtigeo {

namespace {

constexpr double unit_tolerance = 1e-6;
constexpr double renormalise_tolerance = 1e-3;

double parse_number(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value))
    throw FormatError("non-numeric token \"" + std::string(token) + "\" in gradient table");
  return value;
}

// Non-blank lines of `text`, each split on whitespace.
std::vector<std::vector<double>> parse_rows(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    std::vector<double> row;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) row.push_back(parse_number(line.substr(i, j - i)));
      i = j;
    }
    if (!row.empty()) rows.push_back(std::move(row));
    pos = eol + 1;
  }
  return rows;
}

std::string format_number(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

void require_unit(const Eigen::Vector3d& g) {
  if (std::abs(g.norm() - 1.0) > unit_tolerance)
    throw FormatError("gradient direction is not unit length (norm " + format_number(g.norm()) + ")");
}

}  // namespace

GradientScheme::GradientScheme(std::vector<GradientEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!std::isfinite(e.bval) || e.bval < 0.0)
      throw FormatError("invalid b-value at entry " + std::to_string(i));
    if (!e.bvec.allFinite()) throw FormatError("non-finite direction at entry " + std::to_string(i));
    if (e.bval == 0.0) {
      if (!e.bvec.isZero(0.0)) throw FormatError("b=0 entry " + std::to_string(i) + " has a nonzero direction");
    } else if (std::abs(e.bvec.norm() - 1.0) > unit_tolerance) {
      throw FormatError("direction of entry " + std::to_string(i) + " is not unit length");
    }
  }
}

std::vector<std::size_t> GradientScheme::b0_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].bval == 0.0) out.push_back(i);
  return out;
}

std::vector<std::size_t> GradientScheme::weighted_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].bval > 0.0) out.push_back(i);
  return out;
}

bool GradientScheme::has_b0() const {
  return std::any_of(entries_.begin(), entries_.end(), [](const GradientEntry& e) { return e.bval == 0.0; });
}

GradientScheme GradientScheme::subset(std::span<const std::size_t> indices) const {
  std::vector<GradientEntry> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= entries_.size()) throw FormatError("subset index " + std::to_string(i) + " out of range");
    picked.push_back(entries_[i]);
  }
  return GradientScheme(std::move(picked));
}

GradientScheme parse_fsl_tables(std::string_view bvec_text, std::string_view bval_text) {
  const auto vec_rows = parse_rows(bvec_text);
  const auto val_rows = parse_rows(bval_text);
  if (vec_rows.size() != 3)
    throw FormatError("bvecs must have exactly 3 rows, found " + std::to_string(vec_rows.size()));
  if (val_rows.size() != 1)
    throw FormatError("bvals must have exactly 1 row, found " + std::to_string(val_rows.size()));
  const std::size_t n = val_rows[0].size();
  for (const auto& row : vec_rows)
    if (row.size() != n)
      throw FormatError("bvecs/bvals column count mismatch (" + std::to_string(row.size()) + " vs " +
                        std::to_string(n) + ")");

  std::vector<GradientEntry> entries(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = entries[i];
    e.bval = val_rows[0][i];
    if (e.bval < 0.0) throw FormatError("negative b-value in column " + std::to_string(i));
    if (e.bval == 0.0) continue;
    const Eigen::Vector3d g(vec_rows[0][i], vec_rows[1][i], vec_rows[2][i]);
    const double norm = g.norm();
    if (std::abs(norm - 1.0) > renormalise_tolerance)
      throw FormatError("bvec in column " + std::to_string(i) + " has norm " + format_number(norm));
    e.bvec = g / norm;
  }
  return GradientScheme(std::move(entries));
}

std::pair<std::string, std::string> format_fsl_tables(const GradientScheme& scheme) {
  std::string vecs;
  for (int axis = 0; axis < 3; ++axis) {
    for (std::size_t i = 0; i < scheme.size(); ++i) {
      if (i) vecs += ' ';
      vecs += format_number(scheme[i].bvec[axis]);
    }
    vecs += '\n';
  }
  std::string vals;
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    if (i) vals += ' ';
    vals += format_number(scheme[i].bval);
  }
  vals += '\n';
  return {std::move(vecs), std::move(vals)};
}

double angular_distance(const Eigen::Vector3d& g1, const Eigen::Vector3d& g2) {
  require_unit(g1);
  require_unit(g2);
  return std::acos(std::min(1.0, std::abs(g1.dot(g2))));
}

SubsetSelection kennard_stone_select(const GradientScheme& scheme, std::size_t k) {
  const auto candidates = scheme.weighted_indices();
  const std::size_t m = candidates.size();
  if (k < 2) throw FormatError("subset size must be at least 2");
  if (k > m)
    throw FormatError("requested " + std::to_string(k) + " directions but only " + std::to_string(m) +
                      " diffusion-weighted directions are available");

  std::vector<double> dist(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      dist[i * m + j] = dist[j * m + i] = angular_distance(scheme[candidates[i]].bvec, scheme[candidates[j]].bvec);

  std::size_t seed_a = 0, seed_b = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (dist[i * m + j] > best) {
        best = dist[i * m + j];
        seed_a = i;
        seed_b = j;
      }

  std::vector<char> taken(m, 0);
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> order;
  order.reserve(k);
  auto take = [&](std::size_t c) {
    taken[c] = 1;
    order.push_back(c);
    for (std::size_t j = 0; j < m; ++j) nearest[j] = std::min(nearest[j], dist[c * m + j]);
  };
  take(seed_a);
  take(seed_b);

  while (order.size() < k) {
    std::size_t pick = m;
    double pick_value = -1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (taken[j]) continue;
      if (nearest[j] > pick_value) {
        pick_value = nearest[j];
        pick = j;
      }
    }
    take(pick);
  }

  SubsetSelection out;
  out.indices.reserve(k);
  double spread = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < order.size(); ++a) {
    out.indices.push_back(candidates[order[a]]);
    for (std::size_t b = a + 1; b < order.size(); ++b) spread = std::min(spread, dist[order[a] * m + order[b]]);
  }
  out.spread = spread;
  return out;
}

double selection_spread(const GradientScheme& scheme, std::span<const std::size_t> indices) {
  double spread = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < indices.size(); ++a)
    for (std::size_t b = a + 1; b < indices.size(); ++b)
      spread = std::min(spread, angular_distance(scheme[indices[a]].bvec, scheme[indices[b]].bvec));
  return spread;
}

std::vector<std::size_t> fitting_indices(const GradientScheme& scheme, const SubsetSelection& selection) {
  auto out = scheme.b0_indices();
  for (std::size_t i : selection.indices) {
    if (i >= scheme.size() || scheme[i].bval == 0.0)
      throw FormatError("selection index " + std::to_string(i) + " is not a diffusion-weighted entry");
    out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw FormatError("selection has duplicate indices");
  return out;
}

std::string format_selection(const SubsetSelection& selection) {
  std::string text = "# spread=" + format_number(selection.spread) + " rad\n";
  for (std::size_t i : selection.indices) text += std::to_string(i) + '\n';
  return text;
}

SubsetSelection parse_selection(std::string_view text) {
  SubsetSelection out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      const auto key = line.find("spread=");
      if (key != std::string::npos) {
        std::string_view rest(line);
        rest.remove_prefix(key + 7);
        rest = rest.substr(0, rest.find_first_of(" \t\r"));
        out.spread = parse_number(rest);
      }
      continue;
    }
    const auto last = line.find_last_not_of(" \t\r");
    const std::string_view token(line.data() + first, last - first + 1);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw FormatError("invalid index \"" + std::string(token) + "\" in selection file");
    out.indices.push_back(value);
  }
  return out;
}

std::vector<Eigen::Vector3d> electrostatic_directions(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::Vector3d> g(n);
  for (auto& v : g) {
    do {
      v = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } while (v.norm() < 1e-8);
    v.normalize();
  }
  if (n < 2) return g;

  // Antipodal charge pairs: each direction repels both g_j and -g_j.
  constexpr int iterations = 400;
  std::vector<Eigen::Vector3d> force(n);
  double step = 0.1;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector3d f = Eigen::Vector3d::Zero();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const Eigen::Vector3d minus = g[i] - g[j];
        const Eigen::Vector3d plus = g[i] + g[j];
        const double rm = std::max(minus.norm(), 1e-12);
        const double rp = std::max(plus.norm(), 1e-12);
        f += minus / (rm * rm * rm) + plus / (rp * rp * rp);
      }
      force[i] = f - f.dot(g[i]) * g[i];
    }
    double largest = 0.0;
    for (const auto& f : force) largest = std::max(largest, f.norm());
    if (largest == 0.0) break;
    for (std::size_t i = 0; i < n; ++i) g[i] = (g[i] + (step / largest) * force[i]).normalized();
    step *= 0.99;
  }
  for (auto& v : g)
    if (v.z() < 0.0) v = -v;
  return g;
}

GradientScheme make_scheme(std::size_t b0_count, double bval, const std::vector<Eigen::Vector3d>& directions) {
  std::vector<GradientEntry> entries(b0_count);
  for (const auto& d : directions) entries.push_back({bval, d.normalized()});
  return GradientScheme(std::move(entries));
}

GradientScheme canonical_six_direction_scheme() {
  const double h = 1.0 / std::sqrt(2.0);
  return make_scheme(1, 1000.0,
                     {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {h, h, 0}, {h, 0, h}, {0, h, h}});
}

}  // namespace dtigeo
