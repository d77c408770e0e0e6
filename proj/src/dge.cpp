#include "dtigeo/dge.hpp"

#include <cmath>
#include <string>

#include "dtigeo/error.hpp"
#include "dtigeo/numeric.hpp"

namespace dtigeo {

namespace {

constexpr std::size_t scheme_entries = 7;

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  // Row-major draw order, matching the on-disk layout.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

Dense seeded_dense(std::size_t out, std::size_t in, Rng& rng) {
  Dense d{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
  fill_uniform(d.weight, static_cast<double>(in), rng);
  fill_uniform(d.bias, static_cast<double>(in), rng);
  return d;
}

void check_dense(const Dense& d, Eigen::Index out, Eigen::Index in, const char* name) {
  if (d.weight.rows() != out || d.weight.cols() != in || d.bias.size() != out)
    throw FormatError(std::string("DGE parameter ") + name + " has the wrong shape");
}

void check_finite(const std::vector<double>& values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what);
}

}  // namespace

FeatureMap FeatureMap::zeros(const std::array<std::size_t, 5>& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    if (extent == 0) throw FormatError("feature map extents must be positive");
    n *= extent;
  }
  return FeatureMap{shape, std::vector<double>(n, 0.0)};
}

DgeParams DgeParams::seeded(std::size_t channels, std::uint64_t seed) {
  if (channels == 0) throw FormatError("channel count must be positive");
  Rng rng(seed);
  DgeParams p;
  p.channels = channels;
  const double conv_fan_in = static_cast<double>(channels * 27);
  p.conv_weight.resize(channels * channels * 27);
  const double bound = 1.0 / std::sqrt(conv_fan_in);
  for (double& w : p.conv_weight) w = rng.uniform(-bound, bound);
  p.conv_bias.resize(static_cast<Eigen::Index>(channels));
  fill_uniform(p.conv_bias, conv_fan_in, rng);
  p.f2 = Mlp{seeded_dense(channels, channels, rng), seeded_dense(channels, channels, rng)};
  p.f3 = Mlp{seeded_dense(channels, channels, rng), seeded_dense(channels, channels, rng)};
  p.embed_in = seeded_dense(channels, 3 * scheme_entries, rng);
  return p;
}

void DgeParams::validate() const {
  const auto c = static_cast<Eigen::Index>(channels);
  if (channels == 0) throw FormatError("channel count must be positive");
  if (conv_weight.size() != channels * channels * 27 || conv_bias.size() != c)
    throw FormatError("DGE convolution parameters have the wrong shape");
  check_dense(f2.first, c, c, "f2.first");
  check_dense(f2.second, c, c, "f2.second");
  check_dense(f3.first, c, c, "f3.first");
  check_dense(f3.second, c, c, "f3.second");
  check_dense(embed_in, c, 3 * scheme_entries, "embed_in");
}

GradientEmbedding embed_bvecs(const std::vector<GradientScheme>& batch, const DgeParams& p) {
  p.validate();
  if (batch.empty()) throw FormatError("empty scheme batch");
  GradientEmbedding e(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(p.channels));
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const GradientScheme& s = batch[n];
    if (s.size() != scheme_entries)
      throw FormatError("gradient embedding needs 7 scheme entries, got " + std::to_string(s.size()));
    if (s[0].bval != 0.0) throw FormatError("gradient embedding expects the b = 0 entry first");
    Eigen::VectorXd flat(3 * scheme_entries);
    for (std::size_t k = 0; k < scheme_entries; ++k) flat.segment<3>(static_cast<Eigen::Index>(3 * k)) = s[k].bvec;
    e.row(static_cast<Eigen::Index>(n)) = p.embed_in.apply(flat).transpose();
  }
  return e;
}

FeatureMap dge_convolve(const FeatureMap& x, const DgeParams& p) {
  p.validate();
  if (x.channels() != p.channels) throw FormatError("feature map channels do not match the parameters");
  const auto [nb, nc, w, h, d] = x.shape;
  if (w < 3 || h < 3 || d < 3) throw FormatError("spatial extents must be at least 3");
  FeatureMap y = FeatureMap::zeros(x.shape);
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t o = 0; o < nc; ++o)
      for (std::size_t i = 0; i < w; ++i)
        for (std::size_t j = 0; j < h; ++j)
          for (std::size_t k = 0; k < d; ++k) {
            double acc = p.conv_bias[static_cast<Eigen::Index>(o)];
            for (std::size_t c = 0; c < nc; ++c)
              for (int a = 0; a < 3; ++a) {
                const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(i) + a - 1;
                if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(w)) continue;
                for (int b = 0; b < 3; ++b) {
                  const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(j) + b - 1;
                  if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (int g = 0; g < 3; ++g) {
                    const std::ptrdiff_t zi = static_cast<std::ptrdiff_t>(k) + g - 1;
                    if (zi < 0 || zi >= static_cast<std::ptrdiff_t>(d)) continue;
                    acc += p.kernel(o, c, a, b, g) *
                           x.at(n, c, static_cast<std::size_t>(xi), static_cast<std::size_t>(yi),
                                static_cast<std::size_t>(zi));
                  }
                }
              }
            y.at(n, o, i, j, k) = acc;
          }
  return y;
}

Eigen::MatrixXd global_average_pool(const FeatureMap& x) {
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(x.batch()), static_cast<Eigen::Index>(x.channels()));
  const std::size_t m = x.positions();
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const std::span<const double> block(x.data.data() + x.index(n, c, 0, 0, 0), m);
      pooled(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) = pairwise_mean(block);
    }
  return pooled;
}

FeatureMap recalibrate(const FeatureMap& x, const GradientEmbedding& e) {
  if (e.rows() != static_cast<Eigen::Index>(x.batch()) || e.cols() != static_cast<Eigen::Index>(x.channels()))
    throw FormatError("embedding shape does not match the feature map");
  FeatureMap out = x;
  const std::size_t m = x.positions();
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const double s = e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
      double* block = out.data.data() + x.index(n, c, 0, 0, 0);
      for (std::size_t i = 0; i < m; ++i) block[i] *= s;
    }
  return out;
}

DgeOutput dge_forward(const FeatureMap& x, const GradientEmbedding& e, const DgeParams& p) {
  if (e.rows() != static_cast<Eigen::Index>(x.batch()) || e.cols() != static_cast<Eigen::Index>(x.channels()))
    throw FormatError("embedding shape does not match the feature map");
  check_finite(x.data, "feature map");
  if (!e.allFinite()) throw NumericalError("non-finite value in gradient embedding");

  const FeatureMap y = dge_convolve(x, p);
  const Eigen::MatrixXd pooled = global_average_pool(y);
  GradientEmbedding next(e.rows(), e.cols());
  for (Eigen::Index n = 0; n < e.rows(); ++n)
    next.row(n) = (p.f2.apply(pooled.row(n).transpose()) + p.f3.apply(e.row(n).transpose())).transpose();
  return DgeOutput{recalibrate(y, next), next};
}

}  // namespace dtigeo
