#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/LU>

#include "dtigeo/numeric.hpp"

using namespace dtigeo;

TEST_CASE("pairwise_sum agrees with a long double accumulation") {
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 15u, 16u, 17u, 1000u, 4097u}) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0) * 1e3;
    long double ref = 0.0L;
    for (double x : v) ref += x;
    CHECK(pairwise_sum(v) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-13));
  }
  CHECK(pairwise_mean(std::vector<double>{}) == 0.0);
  CHECK(pairwise_mean(std::vector<double>{1.0, 2.0, 3.0, 6.0}) == 3.0);
}

TEST_CASE("parallel_for visits every index once regardless of thread count") {
  for (unsigned threads : {1u, 2u, 3u, 8u}) {
    std::vector<int> hits(101, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
    CHECK(std::accumulate(hits.begin(), hits.end(), 0) == 101);
    CHECK(*std::min_element(hits.begin(), hits.end()) == 1);
  }
}

TEST_CASE("Rng streams are reproducible and in range") {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    differs |= u != c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.normal() == b.normal());
    c.normal();
    const std::size_t k = a.index(5);
    CHECK(k == b.index(5));
    c.index(5);
    CHECK(k < 5);
  }
  CHECK(differs);
}

TEST_CASE("normal variates have unit variance") {
  Rng rng(99);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("random_rotation is orthonormal with determinant one") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Matrix3d r = random_rotation(rng);
    CHECK((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-14);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-14));
  }
}
