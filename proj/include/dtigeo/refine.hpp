#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dtigeo/geometry.hpp"
#include "dtigeo/tensorfit.hpp"
#include "dtigeo/volume.hpp"

namespace dtigeo {

struct RefineOptions {
  std::size_t steps = 200;
  double lr = 1e-7;
  /// Halve lr and retry whenever a step would raise l_geo or the number of
  /// degenerate voxels. Without it every step is taken.
  bool line_search = true;
  /// Halvings allowed within one step before the step is skipped.
  int max_halvings = 60;
  unsigned threads = 1;
};

struct RefineResult {
  TensorVolume field;
  /// l_geo before the first step and after each step (steps + 1 values).
  std::vector<double> trajectory;
  double final_lr = 0.0;
  std::size_t rejected_steps = 0;
};

/// Gradient descent on the tensor coefficients of `init` towards `gt` under
/// l_geo. Coefficients outside the mask are left untouched. NumericalError
/// names the step at which the loss becomes non-finite.
RefineResult smoke_refine(const TensorVolume& init, const TensorVolume& gt, const Volume& mask,
                          const LossWeights& w, const RefineOptions& options = {});

/// "step,l_geo" header then one row per trajectory entry.
std::string format_trajectory(const std::vector<double>& trajectory);

}  // namespace dtigeo
