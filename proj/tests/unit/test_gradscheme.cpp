#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "dtigeo/error.hpp"
#include "dtigeo/gradscheme.hpp"
#include "dtigeo/numeric.hpp"
#include "oracles/oracles.hpp"

using namespace dtigeo;

namespace {

GradientScheme weighted_only(const std::vector<Eigen::Vector3d>& dirs) { return make_scheme(0, 1000.0, dirs); }

// Greedy max-min selection written out directly on angles.
std::vector<std::size_t> naive_kennard_stone(const std::vector<Eigen::Vector3d>& dirs, std::size_t k) {
  std::size_t a = 0, b = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (std::size_t j = i + 1; j < dirs.size(); ++j)
      if (oracle::axis_angle(dirs[i], dirs[j]) > best) {
        best = oracle::axis_angle(dirs[i], dirs[j]);
        a = i;
        b = j;
      }
  std::vector<std::size_t> picked{a, b};
  while (picked.size() < k) {
    std::size_t arg = 0;
    double far = -1.0;
    for (std::size_t c = 0; c < dirs.size(); ++c) {
      if (std::find(picked.begin(), picked.end(), c) != picked.end()) continue;
      double near = 10.0;
      for (std::size_t p : picked) near = std::min(near, oracle::axis_angle(dirs[c], dirs[p]));
      if (near > far) {
        far = near;
        arg = c;
      }
    }
    picked.push_back(arg);
  }
  return picked;
}

}  // namespace

TEST_CASE("parse_fsl_tables zeroes b0 directions and keeps column order") {
  const GradientScheme s = parse_fsl_tables("1 1\n0 0\n0 0\n", "0 1000\n");
  REQUIRE(s.size() == 2);
  CHECK(s[0].bval == 0.0);
  CHECK(s[0].bvec == Eigen::Vector3d::Zero());
  CHECK(s[1].bval == 1000.0);
  CHECK(s[1].bvec == Eigen::Vector3d(1, 0, 0));
  CHECK(s.has_b0());
  CHECK(s.b0_indices() == std::vector<std::size_t>{0});
  CHECK(s.weighted_indices() == std::vector<std::size_t>{1});
}

TEST_CASE("parse_fsl_tables single b0 entry") {
  const GradientScheme s = parse_fsl_tables("0\n0\n0\n", "0\n");
  REQUIRE(s.size() == 1);
  CHECK(s[0].bval == 0.0);
}

TEST_CASE("parse_fsl_tables six unit columns") {
  const double h = 1.0 / std::sqrt(2.0);
  const std::vector<Eigen::Vector3d> dirs{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {h, h, 0}, {h, 0, h}, {0, h, h}};
  std::string rows[3];
  for (int r = 0; r < 3; ++r)
    for (const auto& d : dirs) rows[r] += std::to_string(d[r]) + " ";
  const GradientScheme s = parse_fsl_tables(rows[0] + "\n" + rows[1] + "\n" + rows[2] + "\n",
                                            "1000 1000 1000 1000 1000 1000");
  REQUIRE(s.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s[i].bval == 1000.0);
    CHECK((s[i].bvec - dirs[i]).norm() < 1e-12);
    CHECK(s[i].bvec.norm() == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("parse_fsl_tables rejects malformed tables") {
  CHECK_THROWS_AS(parse_fsl_tables("1 0\n0 0\n", "0 1000"), FormatError);              // two rows
  CHECK_THROWS_AS(parse_fsl_tables("1 0\n0 0\n0 0\n", "0 1000 1000"), FormatError);    // column mismatch
  CHECK_THROWS_AS(parse_fsl_tables("1 x\n0 0\n0 0\n", "0 1000"), FormatError);         // token
  CHECK_THROWS_AS(parse_fsl_tables("1.01\n0\n0\n", "1000"), FormatError);              // norm off by 1e-2
  const GradientScheme s = parse_fsl_tables("1.0005\n0\n0\n", "1000");                 // renormalised
  CHECK(s[0].bvec.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(parse_fsl_tables("1\n0\n0\n", "-5"), FormatError);
}

TEST_CASE("format_fsl_tables round trips exactly") {
  const GradientScheme s = make_scheme(2, 1000.0, electrostatic_directions(30, 3));
  const auto [vecs, vals] = format_fsl_tables(s);
  const GradientScheme back = parse_fsl_tables(vecs, vals);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].bval == s[i].bval);
    CHECK((back[i].bvec - s[i].bvec).norm() < 1e-15);
  }
}

TEST_CASE("angular_distance examples and symmetries") {
  const Eigen::Vector3d x(1, 0, 0), y(0, 1, 0);
  CHECK(angular_distance(x, x) == 0.0);
  CHECK(angular_distance(x, -x) == 0.0);
  CHECK(angular_distance(x, y) == doctest::Approx(std::numbers::pi / 2));
  CHECK_THROWS_AS(angular_distance(Eigen::Vector3d(1.1, 0, 0), y), FormatError);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d a = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Eigen::Vector3d b = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    CHECK(angular_distance(a, b) == angular_distance(b, a));
    CHECK(angular_distance(a, -b) == angular_distance(a, b));
    CHECK(angular_distance(a, b) <= std::numbers::pi / 2);
    CHECK(angular_distance(a, b) == doctest::Approx(oracle::axis_angle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("kennard_stone_select tie-break on orthogonal axes") {
  const auto s = weighted_only({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const SubsetSelection sel = kennard_stone_select(s, 2);
  CHECK(sel.indices == std::vector<std::size_t>{0, 1});
  CHECK(sel.spread == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("kennard_stone_select takes a duplicate direction last") {
  const double h = 1.0 / std::sqrt(2.0);
  const auto s = weighted_only({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {h, h, 0}, {1, 0, 0}, {0, h, h}});
  const SubsetSelection sel = kennard_stone_select(s, 6);
  REQUIRE(sel.indices.size() == 6);
  const std::size_t last = sel.indices.back();
  CHECK((last == 0 || last == 4));
  CHECK(sel.spread == 0.0);
}

TEST_CASE("kennard_stone_select matches a direct greedy trace") {
  const auto dirs = electrostatic_directions(40, 11);
  const auto s = make_scheme(2, 1000.0, dirs);
  for (std::size_t k : {2u, 6u, 12u}) {
    const SubsetSelection sel = kennard_stone_select(s, k);
    const auto expected = naive_kennard_stone(dirs, k);
    REQUIRE(sel.indices.size() == k);
    for (std::size_t i = 0; i < k; ++i) CHECK(sel.indices[i] == expected[i] + 2);  // two b0 entries first
    std::vector<Eigen::Vector3d> picked;
    for (std::size_t i : expected) picked.push_back(dirs[i]);
    CHECK(sel.spread == doctest::Approx(oracle::spread(picked)).epsilon(1e-14));
  }
}

TEST_CASE("kennard_stone_select properties") {
  const auto dirs = electrostatic_directions(30, 2);
  const auto s = make_scheme(1, 1000.0, dirs);
  SUBCASE("all directions when k equals the count") {
    const auto sel = kennard_stone_select(s, 30);
    CHECK(std::set<std::size_t>(sel.indices.begin(), sel.indices.end()).size() == 30);
    CHECK(std::find(sel.indices.begin(), sel.indices.end(), 0u) == sel.indices.end());
  }
  SUBCASE("determinism") {
    const auto a = kennard_stone_select(s, 6), b = kennard_stone_select(s, 6);
    CHECK(a.indices == b.indices);
    CHECK(a.spread == b.spread);
  }
  SUBCASE("spread is rotation invariant") {
    std::mt19937_64 gen(8);
    const double base = kennard_stone_select(s, 6).spread;
    for (int i = 0; i < 10; ++i) {
      const Eigen::Matrix3d r = oracle::rotation(gen);
      std::vector<Eigen::Vector3d> rotated;
      for (const auto& d : dirs) rotated.push_back((r * d).normalized());
      CHECK(kennard_stone_select(make_scheme(1, 1000.0, rotated), 6).spread == doctest::Approx(base).epsilon(1e-9));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(kennard_stone_select(s, 31), FormatError);
    CHECK_THROWS_AS(kennard_stone_select(s, 1), FormatError);
  }
}

TEST_CASE("selection file round trip and fitting indices") {
  const auto s = make_scheme(1, 1000.0, electrostatic_directions(20, 1));
  const SubsetSelection sel = kennard_stone_select(s, 6);
  const SubsetSelection back = parse_selection(format_selection(sel));
  CHECK(back.indices == sel.indices);
  CHECK(back.spread == sel.spread);
  const auto fit = fitting_indices(s, sel);
  CHECK(fit.size() == 7);
  CHECK(fit.front() == 0);
  CHECK(std::is_sorted(fit.begin(), fit.end()));
  CHECK(selection_spread(s, sel.indices) == sel.spread);
}

TEST_CASE("GradientScheme construction validates entries") {
  CHECK_THROWS_AS(GradientScheme({{1000.0, Eigen::Vector3d(0.5, 0, 0)}}), FormatError);
  CHECK_THROWS_AS(GradientScheme({{0.0, Eigen::Vector3d(1, 0, 0)}}), FormatError);
  CHECK_THROWS_AS(GradientScheme({{-1.0, Eigen::Vector3d::Zero()}}), FormatError);
}

TEST_CASE("electrostatic directions are unit, upper hemisphere and spread out") {
  const auto dirs = electrostatic_directions(90, 0x5eed);
  REQUIRE(dirs.size() == 90);
  for (const auto& d : dirs) {
    CHECK(d.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.z() >= 0.0);
  }
  CHECK(oracle::spread(dirs) > 0.15);
  CHECK(electrostatic_directions(90, 0x5eed) == dirs);
}
