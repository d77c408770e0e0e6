#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "dtigeo/dge.hpp"
#include "dtigeo/error.hpp"

namespace dtigeo {

namespace {

static_assert(std::endian::native == std::endian::little, "DGE1 I/O assumes a little-endian host");

constexpr char magic[4] = {'D', 'G', 'E', '1'};

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw FormatError("truncated DGE1 file");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

DgeArray matrix_array(const Eigen::MatrixXd& m) {
  DgeArray a;
  a.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.data.push_back(static_cast<float>(m(r, c)));
  return a;
}

DgeArray vector_array(const Eigen::VectorXd& v) {
  DgeArray a;
  a.shape = {static_cast<std::uint32_t>(v.size())};
  for (Eigen::Index i = 0; i < v.size(); ++i) a.data.push_back(static_cast<float>(v[i]));
  return a;
}

Eigen::MatrixXd matrix_of(const DgeArray& a, std::size_t rows, std::size_t cols) {
  if (a.shape != std::vector<std::uint32_t>{static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)})
    throw FormatError("DGE1 parameter array has the wrong shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a.data[r * cols + c];
  return m;
}

Eigen::VectorXd vector_of(const DgeArray& a, std::size_t n) {
  if (a.shape != std::vector<std::uint32_t>{static_cast<std::uint32_t>(n)})
    throw FormatError("DGE1 parameter array has the wrong shape");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = a.data[i];
  return v;
}

}  // namespace

void write_dge_arrays(const std::filesystem::path& path, const std::vector<DgeArray>& arrays) {
  std::string out;
  for (const DgeArray& a : arrays) {
    std::size_t n = 1;
    for (std::uint32_t extent : a.shape) n *= extent;
    if (n != a.data.size()) throw FormatError("DGE1 array data does not match its shape");
    out.append(magic, 4);
    put(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::uint32_t extent : a.shape) put(out, extent);
    for (float v : a.data) put(out, v);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw InputError("cannot write " + path.string());
}

std::vector<DgeArray> read_dge_arrays(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw InputError("missing input: " + path.string());
  const std::string in((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  std::vector<DgeArray> arrays;
  std::size_t pos = 0;
  while (pos < in.size()) {
    if (in.size() - pos < 4 || std::memcmp(in.data() + pos, magic, 4) != 0)
      throw FormatError("bad DGE1 magic in " + path.string());
    pos += 4;
    DgeArray a;
    const auto rank = take<std::uint32_t>(in, pos);
    if (rank > 8) throw FormatError("DGE1 rank out of range");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(take<std::uint32_t>(in, pos));
      n *= a.shape.back();
    }
    if ((in.size() - pos) / sizeof(float) < n) throw FormatError("truncated DGE1 file");
    a.data.resize(n);
    std::memcpy(a.data.data(), in.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
    arrays.push_back(std::move(a));
  }
  if (arrays.empty()) throw FormatError("empty DGE1 file " + path.string());
  return arrays;
}

std::vector<DgeArray> to_arrays(const DgeParams& p) {
  p.validate();
  const auto c = static_cast<std::uint32_t>(p.channels);
  std::vector<DgeArray> out;
  DgeArray conv;
  conv.shape = {c, c, 3, 3, 3};
  for (double w : p.conv_weight) conv.data.push_back(static_cast<float>(w));
  out.push_back(std::move(conv));
  out.push_back(vector_array(p.conv_bias));
  for (const Mlp* mlp : {&p.f2, &p.f3}) {
    out.push_back(matrix_array(mlp->first.weight));
    out.push_back(vector_array(mlp->first.bias));
    out.push_back(matrix_array(mlp->second.weight));
    out.push_back(vector_array(mlp->second.bias));
  }
  out.push_back(matrix_array(p.embed_in.weight));
  out.push_back(vector_array(p.embed_in.bias));
  return out;
}

DgeParams params_from_arrays(const std::vector<DgeArray>& arrays) {
  if (arrays.size() != 12) throw FormatError("DGE1 parameter file must hold 12 arrays");
  const DgeArray& conv = arrays[0];
  if (conv.shape.size() != 5 || conv.shape[0] != conv.shape[1] || conv.shape[2] != 3 || conv.shape[3] != 3 ||
      conv.shape[4] != 3)
    throw FormatError("DGE1 convolution array must be C x C x 3 x 3 x 3");
  DgeParams p;
  p.channels = conv.shape[0];
  p.conv_weight.assign(conv.data.begin(), conv.data.end());
  p.conv_bias = vector_of(arrays[1], p.channels);
  std::size_t next = 2;
  for (Mlp* mlp : {&p.f2, &p.f3}) {
    mlp->first.weight = matrix_of(arrays[next++], p.channels, p.channels);
    mlp->first.bias = vector_of(arrays[next++], p.channels);
    mlp->second.weight = matrix_of(arrays[next++], p.channels, p.channels);
    mlp->second.bias = vector_of(arrays[next++], p.channels);
  }
  p.embed_in.weight = matrix_of(arrays[next++], p.channels, 21);
  p.embed_in.bias = vector_of(arrays[next], p.channels);
  p.validate();
  return p;
}

DgeArray to_array(const FeatureMap& x) {
  DgeArray a;
  for (std::size_t extent : x.shape) a.shape.push_back(static_cast<std::uint32_t>(extent));
  a.data.reserve(x.data.size());
  for (double v : x.data) a.data.push_back(static_cast<float>(v));
  return a;
}

DgeArray to_array(const Eigen::MatrixXd& m) { return matrix_array(m); }

}  // namespace dtigeo
