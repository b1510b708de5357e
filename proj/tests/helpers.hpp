#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "hitvcs/hitvcs.hpp"

namespace testing_util {

using namespace hitvcs;

template <typename T = float>
Plane<T> random_plane(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane<T> p(h, w);
  for (auto& v : p.values) v = static_cast<T>(u(rng));
  return p;
}

template <typename T = float>
Tensor<T> random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

/// Largest relative error between the analytic gradient of f at x and
/// central differences, over every coordinate of x.
inline double gradcheck(const std::function<ag::Var<double>(const ag::Var<double>&)>& f, Tensor<double> x,
                        double h = 1e-6) {
  ag::Parameter<double> p("x", x);
  p.zero_grad();
  ag::backward(f(ag::param(p)));
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = p.value[i];
    p.value[i] = orig + h;
    const double up = f(ag::constant(p.value))->value()[0];
    p.value[i] = orig - h;
    const double dn = f(ag::constant(p.value))->value()[0];
    p.value[i] = orig;
    const double num = (up - dn) / (2 * h);
    const double err = std::abs(num - p.grad[i]) / std::max({1e-8, std::abs(num), std::abs(p.grad[i])});
    worst = std::max(worst, std::abs(num - p.grad[i]) < 1e-9 ? 0.0 : err);
  }
  return worst;
}

/// Scalar objective |y - r|^2 against a fixed random r.
inline ag::Var<double> probe(const ag::Var<double>& y, std::uint64_t seed = 99) {
  return ag::squared_error(y, random_tensor<double>(y->value().shape(), seed));
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.block_size = 8;
  c.scales = 2;
  c.channels = 4;
  c.res_blocks = 1;
  c.gop = 2;
  c.alpha_k = 0.5;
  c.alpha_n = 0.25;
  c.seed = 3;
  return c;
}

template <typename T>
GopSample<T> random_gop(int gop, int h, int w, std::uint64_t seed) {
  GopSample<T> g;
  for (int i = 0; i < gop; ++i) g.frames.push_back(random_plane<T>(h, w, seed + i));
  g.next_keyframe = random_plane<T>(h, w, seed + gop);
  return g;
}

inline double gop_loss(const HitVcsNet<double>& model, const std::vector<Tensor<double>>& targets) {
  ag::NoGradGuard guard;
  std::vector<ag::Var<double>> frames;
  for (const auto& t : targets) frames.push_back(ag::constant(t));
  return hit_loss(model.forward_frames(frames), targets).second.total;
}

struct GradCheckResult {
  double norm_relative = 0;  // |a - n| / max(|a|, |n|) over all checked entries
  double worst_relative = 0;
  std::string worst_name;
  std::size_t checked = 0;
};

/// Total-loss gradient of every parameter entry vs central differences.
/// worst_relative is per entry with denominator max(|analytic|, |numeric|,
/// 1e-6 * largest gradient).
inline GradCheckResult model_gradcheck(HitVcsNet<double>& model, const GopSample<float>& gop, double h = 1e-5,
                                       std::size_t stride = 1) {
  const auto targets = gop_targets<double>(gop);
  model.zero_grad();
  {
    std::vector<ag::Var<double>> frames;
    for (const auto& t : targets) frames.push_back(ag::constant(t));
    ag::backward(hit_loss(model.forward_frames(frames), targets).first);
  }
  double gmax = 0;
  for (const auto& p : model.parameters())
    for (std::size_t i = 0; i < p->size(); ++i) gmax = std::max(gmax, std::abs(p->grad[i]));
  GradCheckResult r;
  double diff2 = 0, ana2 = 0, num2 = 0;
  for (const auto& p : model.parameters()) {
    for (std::size_t i = 0; i < p->size(); i += stride) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = gop_loss(model, targets);
      p->value[i] = orig - h;
      const double dn = gop_loss(model, targets);
      p->value[i] = orig;
      const double num = (up - dn) / (2 * h), ana = p->grad[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6 * gmax});
      if (rel > r.worst_relative) {
        r.worst_relative = rel;
        r.worst_name = p->name + "[" + std::to_string(i) + "]";
      }
      diff2 += (num - ana) * (num - ana);
      ana2 += ana * ana;
      num2 += num * num;
      ++r.checked;
    }
  }
  r.norm_relative = std::sqrt(diff2) / std::max({std::sqrt(ana2), std::sqrt(num2), 1e-300});
  return r;
}

}  // namespace testing_util
