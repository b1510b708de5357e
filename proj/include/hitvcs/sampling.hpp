#pragma once

// Learned block-based CS sampling: every non-overlapping BxB block x of a
// frame is measured as y = Phi x, realized as a bias-free convolution with
// m filters of size BxB, stride B and no padding.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "hitvcs/conv.hpp"
#include "hitvcs/frame.hpp"

namespace hitvcs {

enum class FrameMode { keyframe, nonkeyframe };

inline const char* to_string(FrameMode m) {
  return m == FrameMode::keyframe ? "keyframe" : "nonkeyframe";
}

/// Measurements per block for a sampling ratio: round(ratio * B^2).
inline int measurement_count(double ratio, int block_size) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw DomainError("sampling ratio must be in (0, 1], got " + std::to_string(ratio));
  }
  if (block_size < 2) throw DomainError("block size must be >= 2");
  const int m = static_cast<int>(std::lround(ratio * block_size * block_size));
  if (m < 1) {
    throw DomainError("ratio " + std::to_string(ratio) + " gives zero measurements at B=" +
                      std::to_string(block_size));
  }
  return m;
}

template <typename T>
struct SamplingOperator {
  FrameMode mode = FrameMode::keyframe;
  double ratio = 0.0;
  int block_size = 0;
  int m = 0;
  /// (m, 1, B, B): row r of the m x B^2 matrix is filter r, row-major over the block.
  Tensor<T> weights;

  /// Row-major copy of the m x B^2 sampling matrix.
  conv::RowMat<T> matrix() const {
    return conv::ConstMapMat<T>(weights.data(), m, block_size * block_size);
  }
};

/// Gaussian rows (variance 1/B^2), then row-orthonormalized. Deterministic per seed.
template <typename T = float>
SamplingOperator<T> init_sampling_operator(double ratio, int block_size, std::uint64_t seed,
                                           FrameMode mode = FrameMode::keyframe) {
  SamplingOperator<T> op;
  op.mode = mode;
  op.ratio = ratio;
  op.block_size = block_size;
  op.m = measurement_count(ratio, block_size);
  const int n = block_size * block_size;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / block_size);
  Eigen::MatrixXd g(n, op.m);
  for (int r = 0; r < op.m; ++r)
    for (int c = 0; c < n; ++c) g(c, r) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, op.m);

  op.weights = Tensor<T>({op.m, 1, block_size, block_size});
  for (int r = 0; r < op.m; ++r)
    for (int c = 0; c < n; ++c) op.weights[static_cast<std::size_t>(r) * n + c] = static_cast<T>(q(c, r));
  return op;
}

/// Grid of per-block measurement vectors, stored (row, col, channel).
template <typename T>
struct MeasurementTensor {
  int grid_h = 0;
  int grid_w = 0;
  int channels = 0;
  int block_size = 0;
  double ratio = 0.0;
  std::vector<T> values;

  T& operator()(int i, int j, int r) {
    return values[(static_cast<std::size_t>(i) * grid_w + j) * channels + r];
  }
  const T& operator()(int i, int j, int r) const {
    return values[(static_cast<std::size_t>(i) * grid_w + j) * channels + r];
  }

  /// Network layout (channels, grid_h, grid_w).
  Tensor<T> to_chw() const {
    Tensor<T> t({channels, grid_h, grid_w});
    for (int i = 0; i < grid_h; ++i)
      for (int j = 0; j < grid_w; ++j)
        for (int r = 0; r < channels; ++r) t.at(r, i, j) = (*this)(i, j, r);
    return t;
  }

  static MeasurementTensor from_chw(const Tensor<T>& t, int block_size, double ratio) {
    if (t.rank() != 3) throw ShapeError("measurement tensor must be (m, h, w)");
    MeasurementTensor y;
    y.channels = t.dim(0);
    y.grid_h = t.dim(1);
    y.grid_w = t.dim(2);
    y.block_size = block_size;
    y.ratio = ratio;
    y.values.resize(t.size());
    for (int i = 0; i < y.grid_h; ++i)
      for (int j = 0; j < y.grid_w; ++j)
        for (int r = 0; r < y.channels; ++r) y(i, j, r) = t.at(r, i, j);
    return y;
  }
};

namespace detail {
template <typename T>
void check_sampling_dims(const Plane<T>& frame, const SamplingOperator<T>& op) {
  const int b = op.block_size;
  if (b <= 0 || frame.height % b != 0 || frame.width % b != 0 || frame.height == 0 ||
      frame.width == 0) {
    throw ShapeError("frame " + frame.dims_string() + " is not divisible into " +
                     std::to_string(b) + "x" + std::to_string(b) + " blocks");
  }
}
}  // namespace detail

/// Convolutional route: stride-B, zero-padding, bias-free conv with the m filters.
template <typename T>
MeasurementTensor<T> sample_frame(const Plane<T>& frame, const SamplingOperator<T>& op) {
  detail::check_sampling_dims(frame, op);
  const Tensor<T> y = conv::conv2d_forward<T>(frame.to_tensor(), op.weights, nullptr,
                                              op.block_size, 0);
  return MeasurementTensor<T>::from_chw(y, op.block_size, op.ratio);
}

/// Direct y = Phi x on each row-major vectorized block; no convolution machinery.
template <typename T>
MeasurementTensor<T> matrix_form_oracle(const Plane<T>& frame, const SamplingOperator<T>& op) {
  detail::check_sampling_dims(frame, op);
  const int b = op.block_size;
  const int n = b * b;
  MeasurementTensor<T> y;
  y.grid_h = frame.height / b;
  y.grid_w = frame.width / b;
  y.channels = op.m;
  y.block_size = b;
  y.ratio = op.ratio;
  y.values.assign(static_cast<std::size_t>(y.grid_h) * y.grid_w * op.m, T(0));
  std::vector<T> block(n);
  for (int i = 0; i < y.grid_h; ++i) {
    for (int j = 0; j < y.grid_w; ++j) {
      for (int r = 0; r < b; ++r)
        for (int c = 0; c < b; ++c) block[r * b + c] = frame(i * b + r, j * b + c);
      for (int row = 0; row < op.m; ++row) {
        T acc = 0;
        const T* w = op.weights.data() + static_cast<std::size_t>(row) * n;
        for (int k = 0; k < n; ++k) acc += w[k] * block[k];
        y(i, j, row) = acc;
      }
    }
  }
  return y;
}

/// Keyframe and bounding next keyframe go through key_op, the rest through
/// nonkey_op. Output order: frames[0..G-1], then next_keyframe.
template <typename T>
std::vector<MeasurementTensor<T>> sample_gop(const GopSample<T>& gop, const SamplingOperator<T>& key_op,
                                             const SamplingOperator<T>& nonkey_op) {
  if (gop.frames.empty()) throw ShapeError("empty GOP");
  std::vector<MeasurementTensor<T>> out;
  out.reserve(gop.frames.size() + 1);
  for (std::size_t i = 0; i < gop.frames.size(); ++i) {
    require_same_dims(gop.frames[i], gop.frames[0], "sample_gop");
    out.push_back(sample_frame(gop.frames[i], i == 0 ? key_op : nonkey_op));
  }
  require_same_dims(gop.next_keyframe, gop.frames[0], "sample_gop");
  out.push_back(sample_frame(gop.next_keyframe, key_op));
  return out;
}

// ---------------------------------------------------------------------------
// HVCS measurement container (little-endian):
//   "HVCS" | version u16 | B u16 | grid_h u16 | grid_w u16 | m u32 | ratio f32
//   | grid_h*grid_w*m f32 in (row, col, channel) order
// GOP archive: "HVCA" | version u16 | frame_count u32 | containers...

inline constexpr std::uint16_t kMeasurementFormatVersion = 1;

namespace io {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
inline void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}
inline void read_exact(std::istream& is, char* dst, std::size_t n) {
  if (!is.read(dst, static_cast<std::streamsize>(n))) throw DataError("truncated measurement data");
}
inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  read_exact(is, reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline float get_f32(std::istream& is) {
  const std::uint32_t v = get_u32(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}
inline void expect_magic(std::istream& is, const char* magic) {
  char m[4];
  read_exact(is, m, 4);
  if (std::memcmp(m, magic, 4) != 0) throw DataError(std::string("bad magic, expected ") + magic);
}

}  // namespace io

inline void write_measurement(std::ostream& os, const MeasurementTensor<float>& y) {
  if (y.grid_h > 0xffff || y.grid_w > 0xffff || y.block_size > 0xffff) {
    throw ShapeError("measurement grid too large for the container format");
  }
  os.write("HVCS", 4);
  io::put_u16(os, kMeasurementFormatVersion);
  io::put_u16(os, static_cast<std::uint16_t>(y.block_size));
  io::put_u16(os, static_cast<std::uint16_t>(y.grid_h));
  io::put_u16(os, static_cast<std::uint16_t>(y.grid_w));
  io::put_u32(os, static_cast<std::uint32_t>(y.channels));
  io::put_f32(os, static_cast<float>(y.ratio));
  for (float v : y.values) io::put_f32(os, v);
}

inline MeasurementTensor<float> read_measurement(std::istream& is) {
  io::expect_magic(is, "HVCS");
  const auto version = io::get_u16(is);
  if (version != kMeasurementFormatVersion) {
    throw DataError("unsupported measurement format version " + std::to_string(version));
  }
  MeasurementTensor<float> y;
  y.block_size = io::get_u16(is);
  y.grid_h = io::get_u16(is);
  y.grid_w = io::get_u16(is);
  y.channels = static_cast<int>(io::get_u32(is));
  y.ratio = io::get_f32(is);
  y.values.resize(static_cast<std::size_t>(y.grid_h) * y.grid_w * y.channels);
  for (auto& v : y.values) v = io::get_f32(is);
  return y;
}

inline void write_archive(const std::string& path, const std::vector<MeasurementTensor<float>>& frames) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os.write("HVCA", 4);
  io::put_u16(os, kMeasurementFormatVersion);
  io::put_u32(os, static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) write_measurement(os, f);
  if (!os) throw DataError("write failed: " + path);
}

inline std::vector<MeasurementTensor<float>> read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  io::expect_magic(is, "HVCA");
  const auto version = io::get_u16(is);
  if (version != kMeasurementFormatVersion) {
    throw DataError("unsupported archive version " + std::to_string(version));
  }
  const auto count = io::get_u32(is);
  std::vector<MeasurementTensor<float>> frames;
  frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) frames.push_back(read_measurement(is));
  return frames;
}

}  // namespace hitvcs
