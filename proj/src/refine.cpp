#include "dtigeo/refine.hpp"

#include <cmath>
#include <sstream>

#include "dtigeo/error.hpp"

namespace dtigeo {

namespace {

LossReport evaluate(const TensorVolume& field, const TensorVolume& gt, const Volume& mask, const LossWeights& w,
                    unsigned threads, std::size_t step) {
  LossReport r;
  try {
    r = geo_loss(field, gt, mask, w, LossOptions{true, threads});
  } catch (const NumericalError& e) {
    throw NumericalError("refinement failed at step " + std::to_string(step) + ": " + e.what());
  }
  if (!std::isfinite(r.l_geo)) throw NumericalError("loss became non-finite at step " + std::to_string(step));
  return r;
}

TensorVolume descend(const TensorVolume& field, const LossReport& r, double lr) {
  TensorVolume next = field;
  for (std::size_t i = 0; i < next.size(); ++i) next.tensors[i].d -= lr * r.grad[i];
  return next;
}

}  // namespace

RefineResult smoke_refine(const TensorVolume& init, const TensorVolume& gt, const Volume& mask, const LossWeights& w,
                          const RefineOptions& options) {
  if (options.steps < 1) throw FormatError("refinement needs at least one step");
  if (!(options.lr > 0.0) || !std::isfinite(options.lr)) throw FormatError("learning rate must be positive");

  RefineResult out;
  out.field = init;
  double lr = options.lr;
  LossReport current = evaluate(out.field, gt, mask, w, options.threads, 0);
  out.trajectory.push_back(current.l_geo);

  for (std::size_t step = 1; step <= options.steps; ++step) {
    if (current.l_geo == 0.0) {
      out.trajectory.push_back(current.l_geo);
      continue;
    }
    if (!options.line_search) {
      out.field = descend(out.field, current, lr);
      current = evaluate(out.field, gt, mask, w, options.threads, step);
      out.trajectory.push_back(current.l_geo);
      continue;
    }
    const double tried = lr;
    bool accepted = false;
    for (int attempt = 0; attempt <= options.max_halvings; ++attempt) {
      TensorVolume candidate = descend(out.field, current, lr);
      LossReport next = evaluate(candidate, gt, mask, w, options.threads, step);
      if (next.l_geo <= current.l_geo && next.degenerate_voxels <= current.degenerate_voxels) {
        out.field = std::move(candidate);
        current = std::move(next);
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      ++out.rejected_steps;
      lr = tried;
    }
    out.trajectory.push_back(current.l_geo);
  }
  out.final_lr = lr;
  return out;
}

std::string format_trajectory(const std::vector<double>& trajectory) {
  std::ostringstream out;
  out.precision(17);
  out << "step,l_geo\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i) out << i << ',' << trajectory[i] << '\n';
  return out.str();
}

}  // namespace dtigeo
