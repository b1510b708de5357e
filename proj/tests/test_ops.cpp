#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace hitvcs;
using namespace testing_util;

namespace {

Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int s, int p) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), k = w.dim(2);
  const int oh = (H + 2 * p - k) / s + 1, ow = (W + 2 * p - k) / s + 1;
  Tensor<double> y({O, oh, ow});
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = b ? (*b)[o] : 0.0;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int yy = i * s + ky - p, xx = j * s + kx - p;
              if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
              acc += w[((static_cast<std::size_t>(o) * C + c) * k + ky) * k + kx] * x.at(c, yy, xx);
            }
        y.at(o, i, j) = acc;
      }
  return y;
}

Tensor<double> naive_deconv(const Tensor<double>& x, const Tensor<double>& w, int s, int p) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(1), k = w.dim(2);
  const int oh = (H - 1) * s - 2 * p + k, ow = (W - 1) * s - 2 * p + k;
  Tensor<double> y({O, oh, ow});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int o = 0; o < O; ++o)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int yy = i * s + ky - p, xx = j * s + kx - p;
              if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
              y.at(o, yy, xx) += w[((static_cast<std::size_t>(c) * O + o) * k + ky) * k + kx] * x.at(c, i, j);
            }
  return y;
}

struct ConvCase {
  int k, s, p;
};

}  // namespace

TEST(Conv, ForwardMatchesDirectLoops) {
  for (auto [k, s, p] : {ConvCase{1, 1, 0}, ConvCase{3, 1, 1}, ConvCase{3, 2, 1}, ConvCase{2, 2, 0}, ConvCase{4, 4, 0}}) {
    auto x = random_tensor<double>({3, 8, 12}, 1);
    auto w = random_tensor<double>({5, 3, k, k}, 2);
    auto b = random_tensor<double>({5}, 3);
    auto y = ag::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), s, p);
    EXPECT_LT(max_abs_diff(y->value(), naive_conv(x, w, &b, s, p)), 1e-12) << "k" << k << " s" << s << " p" << p;
  }
}

TEST(Conv, TransposedForwardMatchesDirectLoops) {
  for (auto [k, s, p] : {ConvCase{2, 2, 0}, ConvCase{3, 1, 1}, ConvCase{3, 2, 1}}) {
    auto x = random_tensor<double>({4, 5, 6}, 4);
    auto w = random_tensor<double>({4, 3, k, k}, 5);
    auto y = ag::conv_transpose2d(ag::constant(x), ag::constant(w), ag::Var<double>{}, s, p);
    EXPECT_LT(max_abs_diff(y->value(), naive_deconv(x, w, s, p)), 1e-12);
  }
}

TEST(Conv, TransposedIsAdjoint) {
  auto w = random_tensor<double>({6, 3, 2, 2}, 7);
  auto x = random_tensor<double>({3, 8, 8}, 8);
  auto u = random_tensor<double>({6, 4, 4}, 9);
  auto cx = ag::conv2d(ag::constant(x), ag::constant(w), ag::Var<double>{}, 2, 0);
  auto tu = ag::conv_transpose2d(ag::constant(u), ag::constant(w), ag::Var<double>{}, 2, 0);
  EXPECT_NEAR(dot(cx->value(), u), dot(x, tu->value()), 1e-10);
}

TEST(Conv, ChannelMismatchThrows) {
  auto x = random_tensor<double>({2, 6, 6}, 1);
  auto w = random_tensor<double>({4, 3, 3, 3}, 2);
  EXPECT_THROW(ag::conv2d(ag::constant(x), ag::constant(w), ag::Var<double>{}, 1, 1), ShapeError);
}

TEST(Autograd, ConvGradients) {
  auto w = random_tensor<double>({4, 3, 3, 3}, 11);
  auto b = random_tensor<double>({4}, 12);
  auto x = random_tensor<double>({3, 6, 7}, 13);
  for (int s : {1, 2}) {
    EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::conv2d(v, ag::constant(w), ag::constant(b), s, 1)); }, x), 1e-6);
    EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::conv2d(ag::constant(x), v, ag::constant(b), s, 1)); }, w), 1e-6);
    EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::conv2d(ag::constant(x), ag::constant(w), v, s, 1)); }, b), 1e-6);
  }
}

TEST(Autograd, TransposedConvGradients) {
  auto w = random_tensor<double>({3, 2, 2, 2}, 21);
  auto b = random_tensor<double>({2}, 22);
  auto x = random_tensor<double>({3, 4, 5}, 23);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::conv_transpose2d(v, ag::constant(w), ag::constant(b), 2, 0)); }, x), 1e-6);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::conv_transpose2d(ag::constant(x), v, ag::constant(b), 2, 0)); }, w), 1e-6);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::conv_transpose2d(ag::constant(x), ag::constant(w), v, 2, 0)); }, b), 1e-6);
}

TEST(Autograd, ElementwiseAndReshapeGradients) {
  auto x = random_tensor<double>({4, 3, 3}, 31);
  auto y = random_tensor<double>({4, 3, 3}, 32);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::relu(v)); }, x), 1e-6);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::add(v, ag::constant(y))); }, x), 1e-6);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::add_n<double>({v, v, ag::constant(y)})); }, x), 1e-6);
  EXPECT_LT(gradcheck([&](const ag::Var<double>& v) { return probe(ag::depth_to_space(v, 2)); }, x), 1e-6);
}

TEST(Ops, DepthToSpaceIsRowMajorWithinBlock) {
  Tensor<double> x({4, 2, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  auto y = ag::depth_to_space(ag::constant(x), 2)->value();
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 4, 6}));
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_EQ(y.at(0, i * 2 + c / 2, j * 2 + c % 2), x.at(c, i, j));
  EXPECT_THROW(ag::depth_to_space(ag::constant(Tensor<double>({3, 2, 2})), 2), ShapeError);
}

TEST(Ops, SquaredErrorIsUnnormalizedSum) {
  Tensor<double> x({1, 2, 2}, 1.0), t({1, 2, 2}, 0.5);
  EXPECT_DOUBLE_EQ(ag::squared_error(ag::constant(x), t)->value()[0], 4 * 0.25);
}

TEST(Autograd, NoGradGuardSkipsGraph) {
  ag::Parameter<double> p("w", random_tensor<double>({2, 1, 3, 3}, 1));
  auto x = ag::constant(random_tensor<double>({1, 5, 5}, 2));
  {
    ag::NoGradGuard guard;
    auto y = ag::conv2d(x, ag::param(p), ag::Var<double>{}, 1, 1);
    EXPECT_FALSE(y->requires_grad);
    EXPECT_TRUE(y->parents.empty());
  }
  auto y = ag::conv2d(x, ag::param(p), ag::Var<double>{}, 1, 1);
  EXPECT_TRUE(y->requires_grad);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  // f(x) = |x + x|^2 has gradient 8x.
  ag::Parameter<double> p("x", random_tensor<double>({1, 2, 2}, 3));
  p.zero_grad();
  auto v = ag::param(p);
  ag::backward(ag::squared_error(ag::add(v, v), Tensor<double>({1, 2, 2})));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.grad[i], 8 * p.value[i], 1e-12);
}
