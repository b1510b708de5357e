#pragma once

// End-to-end GOP loss: unnormalized squared L2 error of both the initial
// and the deep reconstruction, for the keyframe, the bounding next keyframe
// and every non-keyframe, summed over GOPs.

#include <utility>
#include <vector>

#include "hitvcs/deep_recon.hpp"

namespace hitvcs {

struct LossBreakdown {
  double key_initial = 0;
  double key_deep = 0;
  double nonkey_initial = 0;
  double nonkey_deep = 0;
  double total = 0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    key_initial += o.key_initial;
    key_deep += o.key_deep;
    nonkey_initial += o.nonkey_initial;
    nonkey_deep += o.nonkey_deep;
    total += o.total;
    return *this;
  }
};

/// Graph form for training. targets: G + 1 frames as (1, H, W) tensors,
/// in the same order as the forward outputs.
template <typename T>
std::pair<ag::Var<T>, LossBreakdown> hit_loss(const GopForward<T>& out, const std::vector<Tensor<T>>& targets) {
  const std::size_t n = targets.size();
  if (n < 2 || out.initial.size() != n || out.deep.size() != n) {
    throw ShapeError("hit_loss: " + std::to_string(out.deep.size()) + " reconstructions for " +
                     std::to_string(n) + " targets");
  }
  const int gop = static_cast<int>(n) - 1;
  LossBreakdown lb;
  std::vector<ag::Var<T>> terms;
  terms.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ti = ag::squared_error(out.initial[i], targets[i]);
    auto td = ag::squared_error(out.deep[i], targets[i]);
    const bool key = HitVcsNet<T>::mode_of(static_cast<int>(i), gop) == FrameMode::keyframe;
    (key ? lb.key_initial : lb.nonkey_initial) += static_cast<double>(ti->value()[0]);
    (key ? lb.key_deep : lb.nonkey_deep) += static_cast<double>(td->value()[0]);
    terms.push_back(std::move(ti));
    terms.push_back(std::move(td));
  }
  lb.total = lb.key_initial + lb.key_deep + lb.nonkey_initial + lb.nonkey_deep;
  return {ag::add_n(terms), lb};
}

/// Plain form over finished reconstructions; one entry per GOP.
template <typename T>
LossBreakdown hit_loss(const std::vector<GopReconstruction<T>>& recs, const std::vector<GopSample<T>>& targets) {
  if (recs.size() != targets.size()) throw ShapeError("hit_loss: GOP count mismatch");
  LossBreakdown total;
  for (std::size_t g = 0; g < recs.size(); ++g) {
    const auto x = targets[g].all_frames();
    const auto& r = recs[g];
    if (r.initial.size() != x.size() || r.deep.size() != x.size()) {
      throw ShapeError("hit_loss: GOP " + std::to_string(g) + " frame count mismatch");
    }
    const int gop = static_cast<int>(x.size()) - 1;
    LossBreakdown lb;
    for (std::size_t i = 0; i < x.size(); ++i) {
      require_same_dims(r.initial[i], x[i], "hit_loss");
      require_same_dims(r.deep[i], x[i], "hit_loss");
      double ei = 0, ed = 0;
      for (std::size_t p = 0; p < x[i].size(); ++p) {
        const double di = double(r.initial[i].values[p]) - double(x[i].values[p]);
        const double dd = double(r.deep[i].values[p]) - double(x[i].values[p]);
        ei += di * di;
        ed += dd * dd;
      }
      const bool key = HitVcsNet<T>::mode_of(static_cast<int>(i), gop) == FrameMode::keyframe;
      (key ? lb.key_initial : lb.nonkey_initial) += ei;
      (key ? lb.key_deep : lb.nonkey_deep) += ed;
    }
    lb.total = lb.key_initial + lb.key_deep + lb.nonkey_initial + lb.nonkey_deep;
    total += lb;
  }
  return total;
}

}  // namespace hitvcs
