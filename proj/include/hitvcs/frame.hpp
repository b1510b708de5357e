#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hitvcs/tensor.hpp"

namespace hitvcs {

/// Single-channel image, row-major, luminance normalized to [0, 1].
template <typename T>
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<T> values;

  Plane() = default;
  Plane(int h, int w, T fill = T(0))
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw ShapeError("negative frame dimensions");
  }

  T& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }

  std::size_t size() const { return values.size(); }
  bool same_dims(const Plane& o) const { return height == o.height && width == o.width; }

  std::string dims_string() const { return std::to_string(height) + "x" + std::to_string(width); }

  /// View as a (1, H, W) tensor.
  Tensor<T> to_tensor() const { return Tensor<T>({1, height, width}, values); }

  static Plane from_tensor(const Tensor<T>& t) {
    if (t.rank() != 3 || t.dim(0) != 1) throw ShapeError("expected (1, H, W) tensor, got " + t.shape_string());
    Plane p;
    p.height = t.dim(1);
    p.width = t.dim(2);
    p.values = t.storage();
    return p;
  }

  template <typename U>
  Plane<U> cast() const {
    Plane<U> p;
    p.height = height;
    p.width = width;
    p.values.assign(values.begin(), values.end());
    return p;
  }
};

using FramePlane = Plane<float>;

template <typename T>
void require_same_dims(const Plane<T>& a, const Plane<T>& b, const char* what) {
  if (!a.same_dims(b)) {
    throw ShapeError(std::string(what) + ": " + a.dims_string() + " vs " + b.dims_string());
  }
}

}  // namespace hitvcs

namespace hitvcs {

/// One GOP: frames[0] is the keyframe, frames[1..G-1] are non-keyframes;
/// next_keyframe is the first frame of the following GOP.
template <typename T>
struct GopSample {
  std::vector<Plane<T>> frames;
  Plane<T> next_keyframe;

  int gop_size() const { return static_cast<int>(frames.size()); }

  /// frames followed by next_keyframe.
  std::vector<Plane<T>> all_frames() const {
    std::vector<Plane<T>> out = frames;
    out.push_back(next_keyframe);
    return out;
  }
};

}  // namespace hitvcs
