#include "dtigeo/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace dtigeo {

namespace {

constexpr double degenerate_discriminant = 1e-14;

EigenSystem sorted(const Eigen::Vector3d& lambdas, const Eigen::Matrix3d& vectors) {
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lambdas[a] > lambdas[b]; });
  EigenSystem out;
  for (int i = 0; i < 3; ++i) {
    out.lambdas[i] = lambdas[order[i]];
    out.vectors.col(i) = vectors.col(order[i]);
  }
  return out;
}

// Rotation angle that annihilates b in [[a, b], [b, c]]: returns tan.
double jacobi_tangent(double a, double b, double c) {
  const double theta = (c - a) / (2.0 * b);
  const double t = 1.0 / (std::abs(theta) + std::hypot(1.0, theta));
  return theta < 0.0 ? -t : t;
}

// Any unit vector orthogonal to unit v.
Eigen::Vector3d orthogonal_unit(const Eigen::Vector3d& v) {
  Eigen::Index axis = 0;
  v.cwiseAbs().minCoeff(&axis);
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  e[axis] = 1.0;
  return v.cross(e).normalized();
}

}  // namespace

DiffusionTensor DiffusionTensor::from_matrix(const Eigen::Matrix3d& m) {
  return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
          m(1, 1), 0.5 * (m(1, 2) + m(2, 1)), m(2, 2)};
}

Eigen::Matrix3d DiffusionTensor::matrix() const {
  Eigen::Matrix3d m;
  m << d[0], d[1], d[2],
       d[1], d[3], d[4],
       d[2], d[4], d[5];
  return m;
}

EigenSystem jacobi_eigensystem(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d a = 0.5 * (m + m.transpose());
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  const double scale = a.norm();
  constexpr std::array<std::array<int, 2>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (int sweep = 0; sweep < 100; ++sweep) {
    const double off = std::sqrt(a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2));
    if (off == 0.0 || off <= 1e-20 * scale) break;
    for (const auto& [p, q] : pairs) {
      if (a(p, q) == 0.0) continue;
      const double t = jacobi_tangent(a(p, p), a(p, q), a(q, q));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = t * c;
      Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
      rot(p, p) = c;
      rot(q, q) = c;
      rot(p, q) = s;
      rot(q, p) = -s;
      a = rot.transpose() * a * rot;
      a(p, q) = a(q, p) = 0.0;
      v = v * rot;
    }
  }
  return sorted(a.diagonal(), v);
}

EigenSystem eigensystem(const DiffusionTensor& t) {
  const Eigen::Matrix3d a = t.matrix();
  if (t.xy() == 0.0 && t.xz() == 0.0 && t.yz() == 0.0)
    return sorted(a.diagonal(), Eigen::Matrix3d::Identity());

  const double q = a.trace() / 3.0;
  Eigen::Matrix3d shifted = a - q * Eigen::Matrix3d::Identity();
  const double p = std::sqrt(shifted.squaredNorm() / 6.0);
  if (!(p > 0.0) || !std::isfinite(p)) return jacobi_eigensystem(a);
  const double r = std::clamp((shifted / p).determinant() / 2.0, -1.0, 1.0);
  if (1.0 - r * r < degenerate_discriminant) return jacobi_eigensystem(a);

  const double phi = std::acos(r) / 3.0;
  const double l1 = q + 2.0 * p * std::cos(phi);
  const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double l2 = 3.0 * q - l1 - l3;
  const double isolated = (l1 - l2) >= (l2 - l3) ? l1 : l3;

  const Eigen::Matrix3d m = a - isolated * Eigen::Matrix3d::Identity();
  const std::array<Eigen::Vector3d, 3> crosses{m.row(0).transpose().cross(m.row(1).transpose()),
                                               m.row(0).transpose().cross(m.row(2).transpose()),
                                               m.row(1).transpose().cross(m.row(2).transpose())};
  const auto best = std::max_element(crosses.begin(), crosses.end(), [](const auto& x, const auto& y) {
    return x.squaredNorm() < y.squaredNorm();
  });
  if (!(best->squaredNorm() > 0.0)) return jacobi_eigensystem(a);
  const Eigen::Vector3d v = best->normalized();

  // Resolve the other two in span{u1, u2} with one exact Jacobi rotation.
  const Eigen::Vector3d u1 = orthogonal_unit(v);
  const Eigen::Vector3d u2 = v.cross(u1);
  const double a11 = u1.dot(a * u1);
  const double a12 = u1.dot(a * u2);
  const double a22 = u2.dot(a * u2);
  Eigen::Vector3d lambdas;
  Eigen::Matrix3d vectors;
  lambdas[0] = v.dot(a * v);
  vectors.col(0) = v;
  if (a12 == 0.0) {
    lambdas[1] = a11;
    lambdas[2] = a22;
    vectors.col(1) = u1;
    vectors.col(2) = u2;
  } else {
    const double tan = jacobi_tangent(a11, a12, a22);
    const double c = 1.0 / std::sqrt(1.0 + tan * tan);
    const double s = tan * c;
    lambdas[1] = a11 - tan * a12;
    lambdas[2] = a22 + tan * a12;
    vectors.col(1) = c * u1 - s * u2;
    vectors.col(2) = s * u1 + c * u2;
  }
  return sorted(lambdas, vectors);
}

double fractional_anisotropy(const Eigen::Vector3d& l) {
  const double denominator = 2.0 * (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
  if (denominator == 0.0) return 0.0;
  const double numerator =
      (l[0] - l[1]) * (l[0] - l[1]) + (l[0] - l[2]) * (l[0] - l[2]) + (l[1] - l[2]) * (l[1] - l[2]);
  return std::sqrt(numerator / denominator);
}

ScalarMetrics scalar_metrics(const EigenSystem& e) {
  Eigen::Vector3d l = e.lambdas;
  std::sort(l.data(), l.data() + 3, std::greater<>());
  ScalarMetrics out;
  out.ad = l[0];
  out.md = (l[0] + l[1] + l[2]) / 3.0;
  out.rd = (l[1] + l[2]) / 2.0;
  out.fa = fractional_anisotropy(l);
  return out;
}

ScalarMetrics scalar_metrics(const DiffusionTensor& t) { return scalar_metrics(eigensystem(t)); }

}  // namespace dtigeo
