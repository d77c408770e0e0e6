#include "dtigeo/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dtigeo/error.hpp"
#include "dtigeo/numeric.hpp"

namespace dtigeo {

namespace {

constexpr double degenerate_determinant = 1e-30;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double relu(double x) { return x > 0.0 ? x : 0.0; }

// Coefficient gradient of a scalar function of D given its matrix gradient G.
TensorCoefficients coefficients_of(const Eigen::Matrix3d& g) {
  TensorCoefficients out;
  out << g(0, 0), g(0, 1) + g(1, 0), g(0, 2) + g(2, 0), g(1, 1), g(1, 2) + g(2, 1), g(2, 2);
  return out;
}

}  // namespace

namespace {

// Which side of every kink of the voxel loss `pred` lies on.
std::array<int, 9> branch_of(const DiffusionTensor& pred, const DiffusionTensor& gt) {
  std::array<int, 9> b{};
  for (int j = 0; j < 6; ++j) b[static_cast<std::size_t>(j)] = static_cast<int>(sign(pred.d[j] - gt.d[j]));
  b[6] = static_cast<int>(sign(delta2(pred) - delta2(gt)));
  b[7] = static_cast<int>(sign(scalar_metrics(pred).fa - scalar_metrics(gt).fa));
  const VoxelLoss v = voxel_loss(pred, gt, LossWeights{}, false);
  b[8] = v.degenerate ? 2 : (v.rho >= 1.0 ? 1 : 0);
  return b;
}

}  // namespace

double delta2(const DiffusionTensor& t) {
  return (t.xx() * t.yy() - t.xy() * t.xy()) + (t.xx() * t.zz() - t.xz() * t.xz()) +
         (t.yy() * t.zz() - t.yz() * t.yz());
}

double delta3(const DiffusionTensor& t) {
  return t.xx() * (t.yy() * t.zz() - t.yz() * t.yz()) - t.xy() * (t.xy() * t.zz() - t.yz() * t.xz()) +
         t.xz() * (t.xy() * t.yz() - t.yy() * t.xz());
}

TensorCoefficients delta2_gradient(const DiffusionTensor& t) {
  TensorCoefficients g;
  g << t.yy() + t.zz(), -2.0 * t.xy(), -2.0 * t.xz(), t.xx() + t.zz(), -2.0 * t.yz(), t.xx() + t.yy();
  return g;
}

TensorCoefficients delta3_gradient(const DiffusionTensor& t) {
  const double c00 = t.yy() * t.zz() - t.yz() * t.yz();
  const double c11 = t.xx() * t.zz() - t.xz() * t.xz();
  const double c22 = t.xx() * t.yy() - t.xy() * t.xy();
  const double c01 = t.xz() * t.yz() - t.xy() * t.zz();
  const double c02 = t.xy() * t.yz() - t.yy() * t.xz();
  const double c12 = t.xy() * t.xz() - t.xx() * t.yz();
  TensorCoefficients g;
  g << c00, 2.0 * c01, 2.0 * c02, c11, 2.0 * c12, c22;
  return g;
}

TensorCoefficients fa_gradient(const DiffusionTensor& t) {
  const EigenSystem e = eigensystem(t);
  const Eigen::Vector3d& l = e.lambdas;
  const double fa = fractional_anisotropy(l);
  if (!(fa > 0.0)) return TensorCoefficients::Zero();
  const double s = l.squaredNorm();
  const double trace = l.sum();
  const double numerator =
      (l[0] - l[1]) * (l[0] - l[1]) + (l[0] - l[2]) * (l[0] - l[2]) + (l[1] - l[2]) * (l[1] - l[2]);
  // FA^2 = N / (2S):  d(FA^2)/dl_i = (3 l_i - tr) / S - N l_i / S^2
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) {
    const double dfa2 = (3.0 * l[i] - trace) / s - numerator * l[i] / (s * s);
    g += (dfa2 / (2.0 * fa)) * e.vectors.col(i) * e.vectors.col(i).transpose();
  }
  return coefficients_of(g);
}

double xi(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw NumericalError("volume ratio must be positive and finite");
  return rho >= 1.0 ? rho : 1.0 / rho;
}

double xi_relu(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw NumericalError("volume ratio must be positive and finite");
  const double inverse = 1.0 / rho;
  const double shrink = relu(1.0 - rho);
  const double grow = relu(rho - 1.0);
  // inverse * shrink + 1 == inverse + (1 - inverse * rho); the fma keeps that
  // residual exact so the sum rounds like 1 / rho itself.
  const double shrink_term_plus_one = shrink > 0.0 ? inverse + std::fma(-inverse, rho, 1.0) : 1.0;
  return shrink_term_plus_one + grow;
}

double xi_derivative(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw NumericalError("volume ratio must be positive and finite");
  return rho >= 1.0 ? 1.0 : -1.0 / (rho * rho);
}

void LossWeights::validate() const {
  for (double w : {alpha, beta, gamma})
    if (!(w >= 0.0) || !std::isfinite(w)) throw FormatError("loss weights must be finite and non-negative");
}

VoxelLoss voxel_loss(const DiffusionTensor& pred, const DiffusionTensor& gt, const LossWeights& w,
                     bool with_gradient) {
  VoxelLoss out;
  const TensorCoefficients residual = pred.d - gt.d;
  out.l_dti = residual.cwiseAbs().sum() / 6.0;
  const double d2_pred = delta2(pred);
  out.l_delta2 = std::abs(delta2(gt) - d2_pred);
  const double fa_pred = scalar_metrics(pred).fa;
  out.l_fa = std::abs(scalar_metrics(gt).fa - fa_pred);

  const double det_gt = delta3(gt);
  const double det_pred = delta3(pred);
  out.rho = det_gt / det_pred;
  out.degenerate = std::abs(det_gt) < degenerate_determinant || std::abs(det_pred) < degenerate_determinant ||
                   !(out.rho > 0.0) || !std::isfinite(out.rho);
  const double base = w.alpha * out.l_dti + w.beta * out.l_delta2;
  if (out.degenerate) {
    out.xi = 0.0;
    out.total = w.gamma * out.l_fa;
  } else {
    out.xi = xi(out.rho);
    out.total = out.xi * base + w.gamma * out.l_fa;
  }
  if (!with_gradient) return out;

  const double fa_sign = sign(fa_pred - scalar_metrics(gt).fa);
  if (fa_sign != 0.0 && w.gamma != 0.0) out.grad = w.gamma * fa_sign * fa_gradient(pred);
  if (out.degenerate) return out;

  TensorCoefficients dti_grad;
  for (int j = 0; j < 6; ++j) dti_grad[j] = sign(residual[j]) / 6.0;
  const TensorCoefficients delta2_grad = sign(d2_pred - delta2(gt)) * delta2_gradient(pred);
  const TensorCoefficients rho_grad = (-out.rho / det_pred) * delta3_gradient(pred);
  out.grad += xi_derivative(out.rho) * base * rho_grad + out.xi * (w.alpha * dti_grad + w.beta * delta2_grad);
  return out;
}

LossReport geo_loss(const TensorVolume& pred, const TensorVolume& gt, const Volume& mask, const LossWeights& w,
                    const LossOptions& options) {
  w.validate();
  if (pred.dims != gt.dims || pred.size() != gt.size()) throw FormatError("predicted and reference fields differ in size");
  if (mask.spatial() != pred.dims) throw FormatError("mask dimensions do not match the tensor fields");
  const auto flags = mask_flags(mask);
  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) voxels.push_back(i);
  if (voxels.empty()) throw FormatError("loss mask is empty");

  std::vector<VoxelLoss> losses(voxels.size());
  parallel_for(voxels.size(), options.threads, [&](std::size_t k) {
    losses[k] = voxel_loss(pred.tensors[voxels[k]], gt.tensors[voxels[k]], w, options.gradient);
  });

  LossReport report;
  report.weights = w;
  report.voxels = voxels.size();
  std::vector<double> l_dti, l_delta2, l_fa, total, xis;
  for (const auto& v : losses) {
    l_dti.push_back(v.l_dti);
    l_delta2.push_back(v.l_delta2);
    l_fa.push_back(v.l_fa);
    total.push_back(v.total);
    if (v.degenerate)
      ++report.degenerate_voxels;
    else
      xis.push_back(v.xi);
  }
  if (report.degenerate_voxels == voxels.size())
    throw NumericalError("every masked voxel has a degenerate determinant ratio");
  report.l_dti = pairwise_mean(l_dti);
  report.l_delta2 = pairwise_mean(l_delta2);
  report.l_fa = pairwise_mean(l_fa);
  report.l_geo = pairwise_mean(total);
  report.xi_mean = pairwise_mean(xis);

  if (options.gradient) {
    report.grad.assign(pred.size(), TensorCoefficients::Zero());
    const double scale = 1.0 / static_cast<double>(voxels.size());
    for (std::size_t k = 0; k < voxels.size(); ++k) report.grad[voxels[k]] = scale * losses[k].grad;
  }
  return report;
}

Volume gradient_volume(const LossReport& report, const TensorVolume& like) {
  if (report.grad.size() != like.size()) throw FormatError("loss report has no gradient for this grid");
  TensorVolume field = like;
  for (std::size_t i = 0; i < field.size(); ++i) field.tensors[i] = DiffusionTensor(report.grad[i]);
  return to_volume(field, DataType::float64);
}

GradientCheck check_gradient(const TensorVolume& pred, const TensorVolume& gt, const Volume& mask,
                             const LossWeights& w, double step) {
  const LossReport report = geo_loss(pred, gt, mask, w);
  const auto flags = mask_flags(mask);
  const double scale = 1.0 / static_cast<double>(report.voxels);

  std::vector<double> analytic, numeric;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) continue;
    for (int j = 0; j < 6; ++j) {
      DiffusionTensor plus = pred.tensors[i];
      DiffusionTensor minus = pred.tensors[i];
      plus.d[j] += step;
      minus.d[j] -= step;
      const auto centre = branch_of(pred.tensors[i], gt.tensors[i]);
      if (branch_of(plus, gt.tensors[i]) != centre || branch_of(minus, gt.tensors[i]) != centre) {
        ++skipped;
        continue;
      }
      const double up = voxel_loss(plus, gt.tensors[i], w, false).total;
      const double down = voxel_loss(minus, gt.tensors[i], w, false).total;
      numeric.push_back(scale * (up - down) / (2.0 * step));
      analytic.push_back(report.grad[i][j]);
    }
  }
  double largest = 0.0;
  for (double v : numeric) largest = std::max(largest, std::abs(v));
  GradientCheck out;
  out.coefficients = numeric.size();
  out.skipped = skipped;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-6 * largest});
    if (denom == 0.0) continue;
    out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return out;
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}};
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"l_dti", r.l_dti},
                     {"l_delta2", r.l_delta2},
                     {"l_fa", r.l_fa},
                     {"xi_mean", r.xi_mean},
                     {"l_geo", r.l_geo},
                     {"voxels", r.voxels},
                     {"degenerate_voxels", r.degenerate_voxels},
                     {"weights", r.weights}};
}

}  // namespace dtigeo
