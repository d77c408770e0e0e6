#include "dtigeo/nifti.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <zlib.h>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "dtigeo/error.hpp"

namespace dtigeo {

namespace {

constexpr std::size_t header_size = 348;
constexpr std::size_t data_offset = 352;

// Byte offsets of the NIfTI-1 header fields used here.
namespace field {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace field

constexpr std::int16_t nifti_uint8 = 2;
constexpr std::int16_t nifti_int16 = 4;
constexpr std::int16_t nifti_float32 = 16;
constexpr std::int16_t nifti_float64 = 64;

bool has_gz_suffix(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw InputError("missing input: " + path.string());
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (!file) throw InputError("cannot open " + path.string());
  std::vector<unsigned char> bytes;
  std::array<unsigned char, 1 << 16> chunk{};
  for (;;) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(file);
      throw InputError("cannot decompress " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return bytes;
}

class HeaderReader {
 public:
  HeaderReader(const unsigned char* base, bool swap) : base_(base), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    std::array<unsigned char, sizeof(T)> raw;
    std::memcpy(raw.data(), base_ + offset, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }

 private:
  const unsigned char* base_;
  bool swap_;
};

template <typename T>
double decode(const unsigned char* p, bool swap) {
  std::array<unsigned char, sizeof(T)> raw;
  std::memcpy(raw.data(), p, sizeof(T));
  if (swap) std::reverse(raw.begin(), raw.end());
  return static_cast<double>(std::bit_cast<T>(raw));
}

std::size_t bytes_per_sample(std::int16_t datatype) {
  switch (datatype) {
    case nifti_uint8: return 1;
    case nifti_int16: return 2;
    case nifti_float32: return 4;
    case nifti_float64: return 8;
    default: throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
  }
}

Eigen::Matrix4d quaternion_affine(const HeaderReader& h, float qfac_raw, const std::array<float, 8>& pixdim) {
  const double b = h.get<float>(field::quatern_b);
  const double c = h.get<float>(field::quatern_b + 4);
  const double d = h.get<float>(field::quatern_b + 8);
  double a = 1.0 - (b * b + c * c + d * d);
  a = a < 1e-7 ? 0.0 : std::sqrt(a);
  Eigen::Quaterniond q(a, b, c, d);
  q.normalize();
  const Eigen::Matrix3d rotation = q.toRotationMatrix();
  const double qfac = qfac_raw < 0.0f ? -1.0 : 1.0;
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  const std::array<double, 3> scale{pixdim[1] > 0 ? pixdim[1] : 1.0, pixdim[2] > 0 ? pixdim[2] : 1.0,
                                    (pixdim[3] > 0 ? pixdim[3] : 1.0) * qfac};
  for (int col = 0; col < 3; ++col) affine.block<3, 1>(0, col) = rotation.col(col) * scale[col];
  for (int row = 0; row < 3; ++row) affine(row, 3) = h.get<float>(field::quatern_b + 12 + 4 * row);
  return affine;
}

template <typename T>
void put(std::vector<unsigned char>& buffer, std::size_t offset, T value) {
  std::memcpy(buffer.data() + offset, &value, sizeof(T));
}

// Rotation part of the affine as a unit quaternion plus qfac; columns are
// normalised first, a reflection goes into qfac.
void encode_qform(const Eigen::Matrix4d& affine, std::vector<unsigned char>& header) {
  Eigen::Matrix3d r = affine.topLeftCorner<3, 3>();
  for (int col = 0; col < 3; ++col) {
    const double n = r.col(col).norm();
    if (n > 0.0) r.col(col) /= n;
  }
  float qfac = 1.0f;
  if (r.determinant() < 0.0) {
    qfac = -1.0f;
    r.col(2) = -r.col(2);
  }
  // Nearest rotation, in case the columns are not exactly orthogonal.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = svd.matrixU() * svd.matrixV().transpose();
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  put<float>(header, field::pixdim, qfac);
  put<float>(header, field::quatern_b, static_cast<float>(q.x()));
  put<float>(header, field::quatern_b + 4, static_cast<float>(q.y()));
  put<float>(header, field::quatern_b + 8, static_cast<float>(q.z()));
  for (int row = 0; row < 3; ++row) put<float>(header, field::quatern_b + 12 + 4 * row, static_cast<float>(affine(row, 3)));
}

template <typename T>
void encode_samples(const Volume& v, std::vector<unsigned char>& out) {
  out.resize(v.data.size() * sizeof(T));
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const double x = v.data[i];
    T value;
    if constexpr (std::is_integral_v<T>) {
      const double rounded = std::nearbyint(x);
      if (!std::isfinite(rounded) || rounded < static_cast<double>(std::numeric_limits<T>::min()) ||
          rounded > static_cast<double>(std::numeric_limits<T>::max()))
        throw FormatError("value " + std::to_string(x) + " overflows the output data type");
      value = static_cast<T>(rounded);
    } else {
      value = static_cast<T>(x);
    }
    std::memcpy(out.data() + i * sizeof(T), &value, sizeof(T));
  }
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < header_size) throw FormatError("truncated NIfTI header in " + path.string());

  bool swap = false;
  {
    const HeaderReader native(bytes.data(), false);
    const auto rank = native.get<std::int16_t>(field::dim);
    if (rank < 1 || rank > 7) {
      const HeaderReader swapped(bytes.data(), true);
      const auto swapped_rank = swapped.get<std::int16_t>(field::dim);
      if (swapped_rank < 1 || swapped_rank > 7)
        throw FormatError("dim[0] out of range in either byte order: " + path.string());
      swap = true;
    }
  }
  const HeaderReader h(bytes.data(), swap);
  if (h.get<std::int32_t>(field::sizeof_hdr) != static_cast<std::int32_t>(header_size))
    throw FormatError("sizeof_hdr is not 348 in " + path.string());
  const char* magic = reinterpret_cast<const char*>(bytes.data() + field::magic);
  if (std::memcmp(magic, "n+1\0", 4) != 0) {
    if (std::memcmp(magic, "ni1\0", 4) == 0)
      throw FormatError("detached-header NIfTI (ni1) is not supported: " + path.string());
    throw FormatError("bad NIfTI magic in " + path.string());
  }

  const int rank = h.get<std::int16_t>(field::dim);
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = h.get<std::int16_t>(field::dim + 2 * i);
  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[i] = h.get<float>(field::pixdim + 4 * i);

  Volume v;
  v.ndim = std::min(rank, 4);
  std::size_t frames = 1;
  for (int i = 1; i <= rank; ++i) {
    if (dim[i] < 1) throw FormatError("non-positive dimension in " + path.string());
    if (i <= 3)
      v.dims[i - 1] = static_cast<std::size_t>(dim[i]);
    else
      frames *= static_cast<std::size_t>(dim[i]);
  }
  v.dims[3] = frames;
  for (int i = 0; i < 4; ++i) v.spacing[i] = pixdim[i + 1] > 0.0f ? pixdim[i + 1] : 1.0;

  const auto datatype = h.get<std::int16_t>(field::datatype);
  switch (datatype) {
    case nifti_uint8: v.dtype = DataType::uint8; break;
    case nifti_int16: v.dtype = DataType::int16; break;
    case nifti_float32: v.dtype = DataType::float32; break;
    case nifti_float64: v.dtype = DataType::float64; break;
    default: throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
  }
  const std::size_t width = bytes_per_sample(datatype);

  const float vox_offset = h.get<float>(field::vox_offset);
  if (!(vox_offset >= 0.0f)) throw FormatError("invalid vox_offset in " + path.string());
  const auto offset = std::max<std::size_t>(header_size, static_cast<std::size_t>(vox_offset));
  const std::size_t count = v.dims[0] * v.dims[1] * v.dims[2] * v.dims[3];
  if (bytes.size() < offset + count * width) throw FormatError("truncated NIfTI data section in " + path.string());

  const double slope = h.get<float>(field::scl_slope);
  const double inter = h.get<float>(field::scl_inter);
  const bool scaled = slope != 0.0 && std::isfinite(slope) && std::isfinite(inter);

  v.data.resize(count);
  const unsigned char* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i, p += width) {
    double x = 0.0;
    switch (datatype) {
      case nifti_uint8: x = *p; break;
      case nifti_int16: x = decode<std::int16_t>(p, swap); break;
      case nifti_float32: x = decode<float>(p, swap); break;
      case nifti_float64: x = decode<double>(p, swap); break;
    }
    v.data[i] = scaled ? x * slope + inter : x;
  }

  const auto sform_code = h.get<std::int16_t>(field::sform_code);
  const auto qform_code = h.get<std::int16_t>(field::qform_code);
  if (sform_code > 0) {
    v.affine = Eigen::Matrix4d::Identity();
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 4; ++col) v.affine(row, col) = h.get<float>(field::srow_x + 16 * row + 4 * col);
  } else if (qform_code > 0) {
    v.affine = quaternion_affine(h, pixdim[0], pixdim);
  } else {
    v.affine = spacing_affine({v.spacing[0], v.spacing[1], v.spacing[2]});
  }
  v.validate();
  return v;
}

void write_nifti(const Volume& v, const std::filesystem::path& path, DataType dtype) {
  v.validate();
  if (std::endian::native != std::endian::little) throw FormatError("NIfTI writer requires a little-endian host");

  std::vector<unsigned char> header(data_offset, 0);
  put<std::int32_t>(header, field::sizeof_hdr, static_cast<std::int32_t>(header_size));
  const int rank = v.dims[3] > 1 ? 4 : 3;
  put<std::int16_t>(header, field::dim, static_cast<std::int16_t>(rank));
  for (int i = 0; i < 4; ++i) {
    if (v.dims[i] > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max()))
      throw FormatError("dimension too large for NIfTI-1");
    put<std::int16_t>(header, field::dim + 2 * (i + 1), static_cast<std::int16_t>(i < rank ? v.dims[i] : 1));
  }
  for (int i = 4; i < 7; ++i) put<std::int16_t>(header, field::dim + 2 * (i + 1), 1);

  std::int16_t code = nifti_float32;
  std::vector<unsigned char> payload;
  switch (dtype) {
    case DataType::uint8: code = nifti_uint8; encode_samples<std::uint8_t>(v, payload); break;
    case DataType::int16: code = nifti_int16; encode_samples<std::int16_t>(v, payload); break;
    case DataType::float32: code = nifti_float32; encode_samples<float>(v, payload); break;
    case DataType::float64: code = nifti_float64; encode_samples<double>(v, payload); break;
  }
  put<std::int16_t>(header, field::datatype, code);
  put<std::int16_t>(header, field::bitpix, static_cast<std::int16_t>(8 * bytes_per_sample(code)));

  for (int i = 0; i < 3; ++i) {
    const double n = v.affine.block<3, 1>(0, i).norm();
    put<float>(header, field::pixdim + 4 * (i + 1), static_cast<float>(n));
  }
  put<float>(header, field::pixdim + 16, static_cast<float>(v.spacing[3]));
  for (int i = 5; i < 8; ++i) put<float>(header, field::pixdim + 4 * i, 1.0f);
  put<float>(header, field::vox_offset, static_cast<float>(data_offset));
  put<float>(header, field::scl_slope, 1.0f);
  put<float>(header, field::scl_inter, 0.0f);
  header[field::xyzt_units] = 2 | 8;  // mm, s
  const char description[] = "dtigeo";
  std::memcpy(header.data() + field::descrip, description, sizeof(description) - 1);

  put<std::int16_t>(header, field::qform_code, 1);
  put<std::int16_t>(header, field::sform_code, 1);
  encode_qform(v.affine, header);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 4; ++col)
      put<float>(header, field::srow_x + 16 * row + 4 * col, static_cast<float>(v.affine(row, col)));
  std::memcpy(header.data() + field::magic, "n+1\0", 4);

  if (has_gz_suffix(path)) {
    gzFile file = gzopen(path.string().c_str(), "wb6");
    if (!file) throw InputError("cannot write " + path.string());
    const bool ok = gzwrite(file, header.data(), static_cast<unsigned>(header.size())) ==
                        static_cast<int>(header.size()) &&
                    (payload.empty() || gzwrite(file, payload.data(), static_cast<unsigned>(payload.size())) ==
                                            static_cast<int>(payload.size()));
    if (gzclose(file) != Z_OK || !ok) throw InputError("cannot write " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw InputError("cannot write " + path.string());
  }
}

}  // namespace dtigeo
