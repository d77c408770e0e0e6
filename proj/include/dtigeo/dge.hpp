#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "dtigeo/gradscheme.hpp"

namespace dtigeo {

/// Activations of shape (N, C, W, H, D), row-major (D fastest).
struct FeatureMap {
  std::array<std::size_t, 5> shape{1, 1, 1, 1, 1};
  std::vector<double> data;

  static FeatureMap zeros(const std::array<std::size_t, 5>& shape);

  std::size_t batch() const { return shape[0]; }
  std::size_t channels() const { return shape[1]; }
  std::size_t positions() const { return shape[2] * shape[3] * shape[4]; }
  std::size_t index(std::size_t n, std::size_t c, std::size_t x, std::size_t y, std::size_t z) const {
    return (((n * shape[1] + c) * shape[2] + x) * shape[3] + y) * shape[4] + z;
  }
  double& at(std::size_t n, std::size_t c, std::size_t x, std::size_t y, std::size_t z) {
    return data[index(n, c, x, y, z)];
  }
  double at(std::size_t n, std::size_t c, std::size_t x, std::size_t y, std::size_t z) const {
    return data[index(n, c, x, y, z)];
  }
};

/// One row per batch element, one column per channel.
using GradientEmbedding = Eigen::MatrixXd;

/// y = W x + b.
struct Dense {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return weight * x + bias; }
};

/// Two dense layers with max(0, .) between them.
struct Mlp {
  Dense first;
  Dense second;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    return second.apply(first.apply(x).cwiseMax(0.0));
  }
};

/// Parameters of the gradient-encoding block for C channels.
struct DgeParams {
  std::size_t channels = 0;
  /// C_out x C_in x 3 x 3 x 3, row-major.
  std::vector<double> conv_weight;
  Eigen::VectorXd conv_bias;
  Mlp f2;  // pooled features
  Mlp f3;  // incoming embedding
  Dense embed_in;  // 21 -> C, from the flattened 7 x 3 bvec table

  /// Every array drawn uniform in +-1/sqrt(fan_in) from one mt19937_64 stream,
  /// in the order conv weight, conv bias, f2, f3, embed_in (weights before biases).
  static DgeParams seeded(std::size_t channels, std::uint64_t seed);

  double kernel(std::size_t out, std::size_t in, int kx, int ky, int kz) const {
    return conv_weight[(((out * channels + in) * 3 + kx) * 3 + ky) * 3 + kz];
  }

  /// FormatError when any array disagrees with `channels`.
  void validate() const;
};

/// Initial embedding: the 7 bvecs of each scheme (b0 first, zero vector)
/// flattened to 21 values and passed through embed_in.
GradientEmbedding embed_bvecs(const std::vector<GradientScheme>& batch, const DgeParams& p);

/// 3x3x3 convolution with unit zero padding; spatial shape is preserved.
FeatureMap dge_convolve(const FeatureMap& x, const DgeParams& p);

/// Global average over spatial positions, N x C.
Eigen::MatrixXd global_average_pool(const FeatureMap& x);

/// x[n, c, ...] * e(n, c).
FeatureMap recalibrate(const FeatureMap& x, const GradientEmbedding& e);

struct DgeOutput {
  FeatureMap features;
  GradientEmbedding embedding;
};

/// Y = conv(x); E' = f2(pool(Y)) + f3(e); returns (Y * E', E').
/// FormatError on shape mismatch or spatial extents below 3, NumericalError on
/// non-finite input.
DgeOutput dge_forward(const FeatureMap& x, const GradientEmbedding& e, const DgeParams& p);

/// One array of a DGE1 file.
struct DgeArray {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

/// DGE1 layout, little-endian, per array: "DGE1", u32 rank, rank x u32 dims,
/// then product(dims) f32 values row-major. A file holds one or more arrays.
void write_dge_arrays(const std::filesystem::path& path, const std::vector<DgeArray>& arrays);
std::vector<DgeArray> read_dge_arrays(const std::filesystem::path& path);

/// Parameters as DGE1 arrays in initialisation order (conv weight, conv bias,
/// f2 w1 b1 w2 b2, f3 w1 b1 w2 b2, embed_in w b).
std::vector<DgeArray> to_arrays(const DgeParams& p);
DgeParams params_from_arrays(const std::vector<DgeArray>& arrays);

DgeArray to_array(const FeatureMap& x);
DgeArray to_array(const Eigen::MatrixXd& m);

}  // namespace dtigeo
