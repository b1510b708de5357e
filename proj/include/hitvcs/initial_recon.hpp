#pragma once

// Per-scale initial reconstruction: a learned linear map takes each block's
// measurement vector to a B_s^2 vector (1x1 convolution, no bias), which is
// reshaped row-major to a B_s x B_s block and tiled into the frame.

#include <algorithm>
#include <string>
#include <vector>

#include "hitvcs/ops.hpp"
#include "hitvcs/sampling.hpp"

namespace hitvcs {

/// Block size at scale s (1-based): B / 2^(s-1).
inline int scale_block_size(int block_size, int scale) {
  if (scale < 1) throw ConfigError("scale index must be >= 1");
  const int div = 1 << (scale - 1);
  if (block_size % div != 0 || block_size / div < 1) {
    throw ConfigError("block size " + std::to_string(block_size) + " not divisible by 2^" +
                      std::to_string(scale - 1));
  }
  return block_size / div;
}

template <typename T>
struct UpsamplingOperator {
  int scale = 1;
  int block_size_s = 0;
  int in_dim = 0;
  /// (B_s^2, m, 1, 1).
  Tensor<T> weights;
};

/// Starts from the transpose of the sampling matrix (its pseudo-inverse for
/// orthonormal rows), followed by 2^(s-1) x 2^(s-1) block averaging at coarser scales.
template <typename T>
UpsamplingOperator<T> init_upsampling_operator(const SamplingOperator<T>& sampling, int scale) {
  const int b = sampling.block_size;
  const int bs = scale_block_size(b, scale);
  const int f = b / bs;
  UpsamplingOperator<T> up;
  up.scale = scale;
  up.block_size_s = bs;
  up.in_dim = sampling.m;
  up.weights = Tensor<T>({bs * bs, sampling.m, 1, 1});
  const T norm = T(1) / static_cast<T>(f * f);
  for (int r = 0; r < bs; ++r)
    for (int c = 0; c < bs; ++c)
      for (int k = 0; k < sampling.m; ++k) {
        T acc = 0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) {
            const int pix = (r * f + dy) * b + (c * f + dx);
            acc += sampling.weights[static_cast<std::size_t>(k) * b * b + pix];
          }
        up.weights[static_cast<std::size_t>(r * bs + c) * sampling.m + k] = acc * norm;
      }
  return up;
}

/// Graph form used by the network: (m, h, w) measurements -> (1, h*B_s, w*B_s).
template <typename T>
ag::Var<T> initial_reconstruct_var(const ag::Var<T>& meas_chw, const ag::Var<T>& up_weights,
                                   int block_size_s) {
  return ag::depth_to_space(ag::conv2d<T>(meas_chw, up_weights, nullptr, 1, 0), block_size_s);
}

template <typename T>
Plane<T> initial_reconstruct(const MeasurementTensor<T>& meas, const UpsamplingOperator<T>& op) {
  if (op.in_dim != meas.channels || op.weights.rank() != 4 || op.weights.dim(1) != meas.channels) {
    throw ShapeError("upsampling operator expects " + std::to_string(op.in_dim) +
                     " measurement channels, got " + std::to_string(meas.channels));
  }
  ag::NoGradGuard no_grad;
  auto out = initial_reconstruct_var<T>(ag::constant(meas.to_chw()), ag::constant(op.weights),
                                        op.block_size_s);
  return Plane<T>::from_tensor(out->value());
}

template <typename T>
struct ScalePyramid {
  /// levels[s-1] is scale s; each level halves the previous resolution.
  std::vector<Plane<T>> levels;
};

template <typename T>
ScalePyramid<T> initial_reconstruct_pyramid(const MeasurementTensor<T>& meas,
                                            const std::vector<UpsamplingOperator<T>>& ops) {
  const int s_count = static_cast<int>(ops.size());
  if (s_count == 0) throw ConfigError("no upsampling operators given");
  std::vector<const UpsamplingOperator<T>*> by_scale(s_count, nullptr);
  for (const auto& op : ops) {
    if (op.scale < 1 || op.scale > s_count) {
      throw ConfigError("upsampling operator scale " + std::to_string(op.scale) + " outside 1.." +
                        std::to_string(s_count));
    }
    if (by_scale[op.scale - 1] != nullptr) {
      throw ConfigError("duplicate upsampling operator for scale " + std::to_string(op.scale));
    }
    by_scale[op.scale - 1] = &op;
  }
  ScalePyramid<T> pyr;
  for (const auto* op : by_scale) pyr.levels.push_back(initial_reconstruct(meas, *op));
  return pyr;
}

}  // namespace hitvcs
