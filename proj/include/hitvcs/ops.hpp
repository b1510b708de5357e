#pragma once

#include <vector>

#include "hitvcs/autograd.hpp"
#include "hitvcs/conv.hpp"

namespace hitvcs::ag {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a->value().require_same_shape(b->value(), "add");
  return make_result<T>(a->value() + b->value(), {a, b}, [](Node<T>& out) {
    for (auto& p : out.parents) {
      if (p->requires_grad) p->grad_buffer() += out.grad;
    }
  });
}

/// Sum of any number of equally shaped terms.
template <typename T>
Var<T> add_n(const std::vector<Var<T>>& terms) {
  if (terms.empty()) throw ShapeError("add_n of nothing");
  Tensor<T> sum = terms.front()->value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    sum.require_same_shape(terms[i]->value(), "add_n");
    sum += terms[i]->value();
  }
  return make_result<T>(std::move(sum), terms, [](Node<T>& out) {
    for (auto& p : out.parents) {
      if (p->requires_grad) p->grad_buffer() += out.grad;
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y = x->value();
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(y), {x}, [](Node<T>& out) {
    auto& p = out.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    const auto& y = out.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > T(0)) g[i] += out.grad[i];
    }
  });
}

/// 2-D convolution; `b` may be null for bias-free layers.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const Tensor<T>* bias = b ? &b->value() : nullptr;
  Tensor<T> y = conv::conv2d_forward(x->value(), w->value(), bias, stride, pad);
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_result<T>(std::move(y), std::move(parents), [stride, pad](Node<T>& out) {
    auto& x = out.parents[0];
    auto& w = out.parents[1];
    Node<T>* b = out.parents.size() > 2 ? out.parents[2].get() : nullptr;
    conv::conv2d_backward(x->value(), w->value(), out.grad, stride, pad,
                          x->requires_grad ? &x->grad_buffer() : nullptr,
                          w->requires_grad ? &w->grad_buffer() : nullptr,
                          (b && b->requires_grad) ? &b->grad_buffer() : nullptr);
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const Tensor<T>* bias = b ? &b->value() : nullptr;
  Tensor<T> y = conv::conv_transpose2d_forward(x->value(), w->value(), bias, stride, pad);
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_result<T>(std::move(y), std::move(parents), [stride, pad](Node<T>& out) {
    auto& x = out.parents[0];
    auto& w = out.parents[1];
    Node<T>* b = out.parents.size() > 2 ? out.parents[2].get() : nullptr;
    conv::conv_transpose2d_backward(x->value(), w->value(), out.grad, stride, pad,
                                    x->requires_grad ? &x->grad_buffer() : nullptr,
                                    w->requires_grad ? &w->grad_buffer() : nullptr,
                                    (b && b->requires_grad) ? &b->grad_buffer() : nullptr);
  });
}

/// (block^2, h, w) -> (1, h*block, w*block). Channel r*block + c of grid cell
/// (i, j) lands at pixel (i*block + r, j*block + c): a row-major reshape of
/// each cell's vector into a block, then tiling.
template <typename T>
Var<T> depth_to_space(const Var<T>& x, int block) {
  const auto& in = x->value();
  if (in.rank() != 3 || in.dim(0) != block * block) {
    throw ShapeError("depth_to_space expects " + std::to_string(block * block) +
                     " channels, got " + in.shape_string());
  }
  const int gh = in.dim(1), gw = in.dim(2);
  Tensor<T> y({1, gh * block, gw * block});
  for (int r = 0; r < block; ++r)
    for (int c = 0; c < block; ++c)
      for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j) y.at(0, i * block + r, j * block + c) = in.at(r * block + c, i, j);
  return make_result<T>(std::move(y), {x}, [block](Node<T>& out) {
    auto& p = out.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    const int gh = g.dim(1), gw = g.dim(2);
    for (int r = 0; r < block; ++r)
      for (int c = 0; c < block; ++c)
        for (int i = 0; i < gh; ++i)
          for (int j = 0; j < gw; ++j) g.at(r * block + c, i, j) += out.grad.at(0, i * block + r, j * block + c);
  });
}

/// Unnormalized squared L2 distance to a fixed target, as a scalar.
template <typename T>
Var<T> squared_error(const Var<T>& x, const Tensor<T>& target) {
  x->value().require_same_shape(target, "squared_error");
  T s = 0;
  const auto& v = x->value();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T d = v[i] - target[i];
    s += d * d;
  }
  return make_result<T>(Tensor<T>({1}, s), {x}, [target](Node<T>& out) {
    auto& p = out.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    const auto& v = p->value();
    const T seed = out.grad[0];
    for (std::size_t i = 0; i < v.size(); ++i) g[i] += T(2) * (v[i] - target[i]) * seed;
  });
}

}  // namespace hitvcs::ag
