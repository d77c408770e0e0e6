#include <doctest.h>

#include <random>
#include <sstream>

#include "dtigeo/error.hpp"
#include "dtigeo/evaluate.hpp"
#include "dtigeo/gradscheme.hpp"
#include "dtigeo/phantom.hpp"
#include "dtigeo/refine.hpp"
#include "oracles/oracles.hpp"

using namespace dtigeo;

namespace {

Volume full_mask(std::array<std::size_t, 3> dims) {
  Volume m = Volume::zeros(dims);
  std::fill(m.data.begin(), m.data.end(), 1.0);
  return m;
}

TensorVolume perturbed(const TensorVolume& f, double sigma, unsigned seed) {
  TensorVolume out = f;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& t : out.tensors)
    for (int j = 0; j < 6; ++j) t.d[j] += n(gen);
  return out;
}

}  // namespace

TEST_CASE("refinement from the target is stationary") {
  PhantomOptions o;
  o.kind = PhantomKind::crossing;
  const Phantom ph = synth_phantom(o);
  const RefineResult r = smoke_refine(ph.gt, ph.gt, ph.mask, LossWeights{}, {.steps = 5});
  CHECK(r.trajectory.size() == 6);
  for (double l : r.trajectory) CHECK(l == 0.0);
  for (std::size_t v = 0; v < r.field.size(); ++v) CHECK(r.field.tensors[v].d == ph.gt.tensors[v].d);
}

TEST_CASE("refinement halves the loss of a perturbed field") {
  PhantomOptions o;
  o.kind = PhantomKind::gradient_fa;
  const Phantom ph = synth_phantom(o);
  const TensorVolume init = perturbed(ph.gt, 1e-4, 3);
  const RefineResult r = smoke_refine(init, ph.gt, ph.mask, LossWeights{}, {.steps = 200});
  REQUIRE(r.trajectory.size() == 201);
  CHECK(r.trajectory.back() < 0.5 * r.trajectory.front());
  for (std::size_t i = 1; i < r.trajectory.size(); ++i) CHECK(r.trajectory[i] <= r.trajectory[i - 1]);
}

TEST_CASE("refinement of a 6-direction fit does not worsen FA") {
  PhantomOptions o;
  o.kind = PhantomKind::crossing;
  o.snr = 30.0;
  const Phantom ph = synth_phantom(o);
  const TensorVolume gt = fit_volume(ph.dwi, ph.scheme, ph.mask);
  const auto picked = fitting_indices(ph.scheme, kennard_stone_select(ph.scheme, 6));
  const TensorVolume init = fit_volume(select_frames(ph.dwi, picked), ph.scheme.subset(picked), ph.mask);
  const RefineResult r = smoke_refine(init, gt, ph.mask, LossWeights{}, {.steps = 100});
  const auto fa_mae = [&](const TensorVolume& f) {
    return masked_mae(scalar_maps(f).fa, scalar_maps(gt).fa, ph.mask).mean;
  };
  CHECK(fa_mae(r.field) <= fa_mae(init));
  CHECK(r.trajectory.back() < r.trajectory.front());
}

TEST_CASE("plain descent with a huge step reports the failing step") {
  PhantomOptions o;
  o.kind = PhantomKind::gradient_fa;
  const Phantom ph = synth_phantom(o);
  const TensorVolume init = perturbed(ph.gt, 1e-4, 4);
  RefineOptions opt;
  opt.steps = 50;
  opt.lr = 1e10;
  opt.line_search = false;
  CHECK_THROWS_WITH_AS(smoke_refine(init, ph.gt, ph.mask, LossWeights{}, opt), doctest::Contains("step"),
                       NumericalError);
}

TEST_CASE("refinement argument checks and trajectory format") {
  const TensorVolume f = TensorVolume::zeros({2, 2, 2});
  CHECK_THROWS_AS(smoke_refine(f, f, full_mask({2, 2, 2}), LossWeights{}, {.steps = 0}), FormatError);
  CHECK_THROWS_AS(smoke_refine(f, f, full_mask({2, 2, 2}), LossWeights{}, {.steps = 1, .lr = -1.0}), FormatError);
  CHECK(format_trajectory({3.0, 2.5}) == "step,l_geo\n0,3\n1,2.5\n");
}
