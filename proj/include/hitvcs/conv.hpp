#pragma once

// Raw 2-D convolution kernels (im2col + GEMM). Single image, CHW layout.
// These carry no autograd state; ops.hpp wraps them into graph nodes and
// the sampling module calls them directly for the convolutional route.

#include <algorithm>
#include <vector>

#include <Eigen/Core>

#include "hitvcs/tensor.hpp"

namespace hitvcs::conv {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// Geometry of a forward convolution over an (channels, height, width) image.
struct Geometry {
  int channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  int col_rows() const { return channels * kernel * kernel; }
  int col_cols() const { return out_height() * out_width(); }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* image, const Geometry& g, T* cols) {
  const int oh = g.out_height(), ow = g.out_width();
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          if (g.stride == 1) {
            // ix = ox - pad + kx: valid ox form one contiguous run.
            const int shift = kx - g.pad;
            const int lo = std::max(0, -shift), hi = std::min(ow, g.width - shift);
            std::fill(dst, dst + std::max(lo, 0), T(0));
            if (hi > lo) std::copy(src + lo + shift, src + hi + shift, dst + lo);
            std::fill(dst + std::max(hi, lo), dst + ow, T(0));
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* image) {
  const int oh = g.out_height(), ow = g.out_width();
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          if (g.stride == 1) {
            const int shift = kx - g.pad;
            const int lo = std::max(0, -shift), hi = std::min(ow, g.width - shift);
            for (int ox = lo; ox < hi; ++ox) dst[ox + shift] += src[ox];
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// Per-thread im2col workspace, grown on demand and reused across calls.
template <typename T>
T* scratch(std::size_t n, int slot = 0) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

inline Geometry input_geometry(const std::vector<int>& x_shape, int kernel, int stride,
                               int pad) {
  if (x_shape.size() != 3) throw ShapeError("convolution input must be (C, H, W)");
  Geometry g{x_shape[0], x_shape[1], x_shape[2], kernel, stride, pad};
  if (g.height + 2 * pad < kernel || g.width + 2 * pad < kernel) {
    throw ShapeError("convolution kernel larger than padded input");
  }
  return g;
}

/// y = conv(x, w) + b. w is (out, in, k, k); b is (out) or empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                         int stride, int pad) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) throw ShapeError("conv weight must be (O, I, k, k)");
  const Geometry g = input_geometry(x.shape(), w.dim(2), stride, pad);
  if (w.dim(1) != g.channels) {
    throw ShapeError("conv input has " + std::to_string(g.channels) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  }
  const int out_c = w.dim(0);
  ConstMapMat<T> wm(w.data(), out_c, g.col_rows());
  Tensor<T> y;
  if (g.is_pointwise()) {
    y = Tensor<T>({out_c, g.out_height(), g.out_width()});
    MapMat<T>(y.data(), out_c, g.col_cols()).noalias() = wm * ConstMapMat<T>(x.data(), g.col_rows(), g.col_cols());
  } else {
    MapMat<T> cols(scratch<T>(std::size_t(g.col_rows()) * g.col_cols()), g.col_rows(), g.col_cols());
    im2col(x.data(), g, cols.data());
    y = Tensor<T>({out_c, g.out_height(), g.out_width()});
    MapMat<T>(y.data(), out_c, g.col_cols()).noalias() = wm * cols;
  }
  MapMat<T> ym(y.data(), out_c, g.col_cols());
  if (b != nullptr && !b->empty()) {
    for (int o = 0; o < out_c; ++o) ym.row(o).array() += (*b)[o];
  }
  return y;
}

/// Accumulates dL/dx, dL/dw, dL/db for conv2d_forward. Null targets are skipped.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride,
                     int pad, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const Geometry g = input_geometry(x.shape(), w.dim(2), stride, pad);
  const int out_c = w.dim(0);
  ConstMapMat<T> dym(dy.data(), out_c, g.col_cols());
  ConstMapMat<T> wm(w.data(), out_c, g.col_rows());
  if (db != nullptr) {
    for (int o = 0; o < out_c; ++o) {
      const T* p = dy.data() + static_cast<std::size_t>(o) * g.col_cols();
      T s = 0;
      for (int i = 0; i < g.col_cols(); ++i) s += p[i];
      (*db)[o] += s;
    }
  }
  if (g.is_pointwise()) {
    ConstMapMat<T> xm(x.data(), g.col_rows(), g.col_cols());
    if (dw != nullptr) MapMat<T>(dw->data(), out_c, g.col_rows()).noalias() += dym * xm.transpose();
    if (dx != nullptr) MapMat<T>(dx->data(), g.col_rows(), g.col_cols()).noalias() += wm.transpose() * dym;
    return;
  }
  const std::size_t n = std::size_t(g.col_rows()) * g.col_cols();
  if (dw != nullptr) {
    MapMat<T> cols(scratch<T>(n), g.col_rows(), g.col_cols());
    im2col(x.data(), g, cols.data());
    MapMat<T>(dw->data(), out_c, g.col_rows()).noalias() += dym * cols.transpose();
  }
  if (dx != nullptr) {
    MapMat<T> dcols(scratch<T>(n, 1), g.col_rows(), g.col_cols());
    dcols.noalias() = wm.transpose() * dym;
    col2im(dcols.data(), g, dx->data());
  }
}

/// Output geometry of a transposed convolution: the forward conv that maps
/// the (out_c, out_h, out_w) result back onto x's grid.
inline Geometry transposed_geometry(const std::vector<int>& x_shape, int out_c, int kernel,
                                    int stride, int pad) {
  if (x_shape.size() != 3) throw ShapeError("deconvolution input must be (C, H, W)");
  const int oh = (x_shape[1] - 1) * stride - 2 * pad + kernel;
  const int ow = (x_shape[2] - 1) * stride - 2 * pad + kernel;
  if (oh <= 0 || ow <= 0) throw ShapeError("deconvolution output would be empty");
  return Geometry{out_c, oh, ow, kernel, stride, pad};
}

/// y = deconv(x, w) + b. w is (in, out, k, k).
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                                   int stride, int pad) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) throw ShapeError("deconv weight must be (I, O, k, k)");
  if (x.rank() != 3 || x.dim(0) != w.dim(0)) throw ShapeError("deconv channel mismatch");
  const int in_c = w.dim(0), out_c = w.dim(1);
  const Geometry g = transposed_geometry(x.shape(), out_c, w.dim(2), stride, pad);
  if (g.out_height() != x.dim(1) || g.out_width() != x.dim(2)) {
    throw ShapeError("deconvolution geometry is not invertible for this input");
  }
  ConstMapMat<T> wm(w.data(), in_c, g.col_rows());
  ConstMapMat<T> xm(x.data(), in_c, g.col_cols());
  MapMat<T> cols(scratch<T>(std::size_t(g.col_rows()) * g.col_cols()), g.col_rows(), g.col_cols());
  cols.noalias() = wm.transpose() * xm;
  Tensor<T> y({out_c, g.height, g.width});
  col2im(cols.data(), g, y.data());
  if (b != nullptr && !b->empty()) {
    const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
    for (int o = 0; o < out_c; ++o) {
      T* p = y.data() + o * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += (*b)[o];
    }
  }
  return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                               int stride, int pad, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int in_c = w.dim(0), out_c = w.dim(1);
  const Geometry g = transposed_geometry(x.shape(), out_c, w.dim(2), stride, pad);
  if (db != nullptr) {
    const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
    for (int o = 0; o < out_c; ++o) {
      const T* p = dy.data() + o * plane;
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      (*db)[o] += s;
    }
  }
  if (dx == nullptr && dw == nullptr) return;
  MapMat<T> dcols(scratch<T>(std::size_t(g.col_rows()) * g.col_cols()), g.col_rows(), g.col_cols());
  im2col(dy.data(), g, dcols.data());
  if (dx != nullptr) {
    MapMat<T>(dx->data(), in_c, g.col_cols()).noalias() +=
        ConstMapMat<T>(w.data(), in_c, g.col_rows()) * dcols;
  }
  if (dw != nullptr) {
    MapMat<T>(dw->data(), in_c, g.col_rows()).noalias() +=
        ConstMapMat<T>(x.data(), in_c, g.col_cols()) * dcols.transpose();
  }
}

}  // namespace hitvcs::conv
