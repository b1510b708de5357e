#pragma once

// Hierarchical deep reconstruction network.
//
// Per frame, the initial reconstruction pyramid (S scales) runs through
//   MSEM: per-scale FEM conv, then J stages. Stage j at scale s:
//     R_s   = RB(F_s^{j-1})
//     M_s   = R_s + sum_{s' != s} resample_{s'->s}(R_s')      (HFFM, optional)
//     F_s^j = E1_s^j + E2_s^j + RB'(M_s)                      (HFIM, non-keyframes)
//           = M_s                                            (otherwise)
//   Keyframes export E_s^j = relu(conv(M_s)) for the non-keyframes of the GOP.
//   MSFM: coarse-to-fine, G_s = F_s + Up(G_{s+1}); Up = deconv/2 -> relu -> conv -> relu -> conv.
//   Output: D = conv(G_1) (+ the scale-1 initial frame when global_residual).

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hitvcs/initial_recon.hpp"

namespace hitvcs {

struct ModelConfig {
  int block_size = 32;
  int scales = 3;
  int gop = 8;
  int channels = 64;
  int res_blocks = 4;
  double alpha_k = 0.5;
  double alpha_n = 0.1;
  bool use_hfim = true;
  bool use_hffm = true;
  bool global_residual = true;
  /// Keyframe stage features pass through a learned conv+ReLU block before
  /// temporal fusion; false hands M^j over unchanged.
  bool key_export_block = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (scales < 1) throw ConfigError("scales must be >= 1");
    if (block_size < 2) throw ConfigError("block size must be >= 2");
    if (block_size % (1 << (scales - 1)) != 0) {
      throw ConfigError("block size " + std::to_string(block_size) + " not divisible by 2^(S-1) = " +
                        std::to_string(1 << (scales - 1)));
    }
    if (res_blocks < 1) throw ConfigError("res_blocks (J) must be >= 1");
    if (gop < 2) throw ConfigError("GOP size must be >= 2");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    measurement_count(alpha_k, block_size);
    measurement_count(alpha_n, block_size);
  }

  int measurements(FrameMode m) const {
    return measurement_count(m == FrameMode::keyframe ? alpha_k : alpha_n, block_size);
  }
  double ratio(FrameMode m) const { return m == FrameMode::keyframe ? alpha_k : alpha_n; }
};

template <typename T>
struct ConvLayer {
  ag::Parameter<T>* weight = nullptr;
  ag::Parameter<T>* bias = nullptr;
  int stride = 1;
  int pad = 1;
  bool transposed = false;

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    auto w = ag::param(*weight);
    ag::Var<T> b = bias != nullptr ? ag::param(*bias) : nullptr;
    return transposed ? ag::conv_transpose2d(x, w, b, stride, pad) : ag::conv2d(x, w, b, stride, pad);
  }
};

template <typename T>
struct ResidualBlock {
  ConvLayer<T> conv1;
  ConvLayer<T> conv2;
};

/// out = f + conv2(relu(conv1(f))).
template <typename T>
ag::Var<T> residual_block(const ResidualBlock<T>& rb, const ag::Var<T>& f) {
  return ag::add(f, rb.conv2(ag::relu(rb.conv1(f))));
}

/// Feature extraction: one 3x3 conv from the 1-channel initial frame to C channels.
template <typename T>
ag::Var<T> fem(const ConvLayer<T>& conv, const ag::Var<T>& frame) {
  if (frame->value().rank() != 3 || frame->value().dim(0) != 1) {
    throw ShapeError("fem expects a (1, H, W) frame, got " + frame->value().shape_string());
  }
  return conv(frame);
}

/// Cross-scale transfer: one stride-2 step per octave, each followed by ReLU.
template <typename T>
struct Resampler {
  int from_scale = 1;
  int to_scale = 1;
  std::vector<ConvLayer<T>> steps;

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    ag::Var<T> y = x;
    for (const auto& step : steps) y = ag::relu(step(y));
    return y;
  }
};

/// M = f_same + resample(f_other).
template <typename T>
ag::Var<T> hffm_merge(const ag::Var<T>& f_same, const ag::Var<T>& f_other, const Resampler<T>& resampler) {
  const auto& a = f_same->value();
  const auto& b = f_other->value();
  if (a.rank() != 3 || b.rank() != 3) throw ShapeError("hffm_merge expects (C, H, W) features");
  const int octaves = static_cast<int>(resampler.steps.size());
  const bool up = resampler.from_scale > resampler.to_scale;
  const long scale = 1L << octaves;
  const bool fits = up ? (long(b.dim(1)) * scale == a.dim(1) && long(b.dim(2)) * scale == a.dim(2))
                       : (long(a.dim(1)) * scale == b.dim(1) && long(a.dim(2)) * scale == b.dim(2));
  if (!fits || a.dim(0) != b.dim(0)) {
    throw ShapeError("hffm_merge: " + b.shape_string() + " is not " + std::to_string(octaves) +
                     " octave(s) " + (up ? "below " : "above ") + a.shape_string());
  }
  return ag::add(f_same, resampler(f_other));
}

/// Temporal interaction: out = f_k1 + f_k2 + RB(f_n_prev).
template <typename T>
ag::Var<T> hfim_interact(const ag::Var<T>& f_k1, const ag::Var<T>& f_k2, const ag::Var<T>& f_n_prev,
                         const ResidualBlock<T>& rb) {
  const auto& n = f_n_prev->value();
  if (!n.same_shape(f_k1->value()) || !n.same_shape(f_k2->value())) {
    throw ShapeError("hfim_interact: keyframe features " + f_k1->value().shape_string() + ", " +
                     f_k2->value().shape_string() + " vs non-keyframe " + n.shape_string());
  }
  return ag::add_n<T>({f_k1, f_k2, residual_block(rb, f_n_prev)});
}

template <typename T>
struct UpModule {
  ConvLayer<T> deconv;
  ConvLayer<T> conv1;
  ConvLayer<T> conv2;

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    return conv2(ag::relu(conv1(ag::relu(deconv(x)))));
  }
};

/// Per-frame-mode network branch. Index conventions: [s] is 0-based scale, [j] stage.
template <typename T>
struct Branch {
  FrameMode mode = FrameMode::keyframe;
  std::vector<ag::Parameter<T>*> upsampling;                  // [s], (B_s^2, m, 1, 1)
  std::vector<ConvLayer<T>> fem;                              // [s]
  std::vector<std::vector<ResidualBlock<T>>> rb;              // [s][j]
  std::vector<std::vector<Resampler<T>>> hffm;                // [j] -> all ordered scale pairs
  std::vector<std::vector<ConvLayer<T>>> key_export;          // [s][j], keyframe branch with HFIM
  std::vector<std::vector<ResidualBlock<T>>> hfim_rb;         // [s][j], non-keyframe branch with HFIM
  std::vector<UpModule<T>> msfm;                              // [s]: scale s+1 -> s
  ConvLayer<T> out;
};

/// Stage features a keyframe hands to the non-keyframes: [s][j].
template <typename T>
using KeyframeFeatures = std::vector<std::vector<ag::Var<T>>>;

template <typename T>
struct MsemOutput {
  std::vector<ag::Var<T>> features;  // F_s^J per scale
  KeyframeFeatures<T> exported;      // keyframe branch with HFIM only
};

template <typename T>
MsemOutput<T> msem_forward(const Branch<T>& branch, const std::vector<ag::Var<T>>& pyramid,
                           const KeyframeFeatures<T>* key1, const KeyframeFeatures<T>* key2,
                           const ModelConfig& cfg) {
  const int S = cfg.scales, J = cfg.res_blocks;
  if (static_cast<int>(pyramid.size()) != S) {
    throw ShapeError("pyramid has " + std::to_string(pyramid.size()) + " levels, expected " +
                     std::to_string(S));
  }
  const bool is_key = branch.mode == FrameMode::keyframe;
  const bool interact = !is_key && cfg.use_hfim;
  if (interact) {
    for (const auto* k : {key1, key2}) {
      if (k == nullptr || static_cast<int>(k->size()) != S ||
          static_cast<int>(k->front().size()) != J) {
        throw ConfigError("non-keyframe pass with HFIM needs stage features of both bounding keyframes");
      }
    }
  }

  MsemOutput<T> out;
  std::vector<ag::Var<T>> f(S);
  for (int s = 0; s < S; ++s) f[s] = fem(branch.fem[s], pyramid[s]);
  if (is_key && cfg.use_hfim) out.exported.assign(S, std::vector<ag::Var<T>>(J));

  for (int j = 0; j < J; ++j) {
    std::vector<ag::Var<T>> r(S);
    for (int s = 0; s < S; ++s) r[s] = residual_block(branch.rb[s][j], f[s]);
    std::vector<ag::Var<T>> merged = r;
    if (cfg.use_hffm && S > 1) {
      for (const auto& rs : branch.hffm[j]) {
        merged[rs.to_scale - 1] = hffm_merge(merged[rs.to_scale - 1], r[rs.from_scale - 1], rs);
      }
    }
    for (int s = 0; s < S; ++s) {
      if (interact) {
        f[s] = hfim_interact((*key1)[s][j], (*key2)[s][j], merged[s], branch.hfim_rb[s][j]);
      } else {
        f[s] = merged[s];
      }
      if (is_key && cfg.use_hfim) {
        out.exported[s][j] = cfg.key_export_block ? ag::relu(branch.key_export[s][j](merged[s])) : merged[s];
      }
    }
  }
  out.features = std::move(f);
  return out;
}

/// Coarse-to-fine fusion down to scale 1.
template <typename T>
ag::Var<T> msfm_forward(const Branch<T>& branch, const std::vector<ag::Var<T>>& features) {
  if (features.empty()) throw ShapeError("msfm_forward needs at least one scale");
  if (features.size() != branch.msfm.size() + 1) throw ShapeError("msfm_forward: scale count mismatch");
  ag::Var<T> g = features.back();
  for (int s = static_cast<int>(features.size()) - 2; s >= 0; --s) {
    auto up = branch.msfm[s](g);
    if (!up->value().same_shape(features[s]->value())) {
      throw ShapeError("msfm_forward: upsampled " + up->value().shape_string() + " vs scale feature " +
                       features[s]->value().shape_string());
    }
    g = ag::add(features[s], up);
  }
  return g;
}

template <typename T>
struct GopForward {
  std::vector<ag::Var<T>> initial;  // scale-1 initial frames, order frames[0..G-1], next_keyframe
  std::vector<ag::Var<T>> deep;
};

template <typename T>
struct GopReconstruction {
  std::vector<Plane<T>> initial;
  std::vector<Plane<T>> deep;
};

template <typename T>
class HitVcsNet {
 public:
  explicit HitVcsNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    sampling_key_ = make_sampling(FrameMode::keyframe, rng());
    sampling_nonkey_ = make_sampling(FrameMode::nonkeyframe, rng());
    build_branch(key_, FrameMode::keyframe, *sampling_key_, rng);
    build_branch(nonkey_, FrameMode::nonkeyframe, *sampling_nonkey_, rng);
  }

  HitVcsNet(const HitVcsNet&) = delete;
  HitVcsNet& operator=(const HitVcsNet&) = delete;
  HitVcsNet(HitVcsNet&&) = default;
  HitVcsNet& operator=(HitVcsNet&&) = default;

  const ModelConfig& config() const { return cfg_; }

  const std::vector<std::unique_ptr<ag::Parameter<T>>>& parameters() const { return params_; }

  ag::Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  const Branch<T>& branch(FrameMode m) const { return m == FrameMode::keyframe ? key_ : nonkey_; }

  SamplingOperator<T> sampling_operator(FrameMode m) const {
    SamplingOperator<T> op;
    op.mode = m;
    op.ratio = cfg_.ratio(m);
    op.block_size = cfg_.block_size;
    op.m = cfg_.measurements(m);
    op.weights = (m == FrameMode::keyframe ? sampling_key_ : sampling_nonkey_)->value;
    return op;
  }

  UpsamplingOperator<T> upsampling_operator(FrameMode m, int scale) const {
    UpsamplingOperator<T> up;
    up.scale = scale;
    up.block_size_s = scale_block_size(cfg_.block_size, scale);
    up.in_dim = cfg_.measurements(m);
    up.weights = branch(m).upsampling.at(scale - 1)->value;
    return up;
  }

  /// Overwrites a sampling operator (shape must match the configuration).
  void set_sampling_operator(const SamplingOperator<T>& op) {
    auto* p = op.mode == FrameMode::keyframe ? sampling_key_ : sampling_nonkey_;
    p->value.require_same_shape(op.weights, "set_sampling_operator");
    p->value = op.weights;
  }

  void set_upsampling_operator(FrameMode m, const UpsamplingOperator<T>& up) {
    auto* p = branch(m).upsampling.at(up.scale - 1);
    p->value.require_same_shape(up.weights, "set_upsampling_operator");
    p->value = up.weights;
  }

  static FrameMode mode_of(int index, int gop) {
    return (index == 0 || index == gop) ? FrameMode::keyframe : FrameMode::nonkeyframe;
  }

  ag::Var<T> sample(const ag::Var<T>& frame, FrameMode m) const {
    auto* w = m == FrameMode::keyframe ? sampling_key_ : sampling_nonkey_;
    return ag::conv2d<T>(frame, ag::param(*w), nullptr, cfg_.block_size, 0);
  }

  std::vector<ag::Var<T>> initial_pyramid(const ag::Var<T>& meas, FrameMode m) const {
    const auto& br = branch(m);
    std::vector<ag::Var<T>> levels;
    for (int s = 1; s <= cfg_.scales; ++s) {
      levels.push_back(initial_reconstruct_var<T>(meas, ag::param(*br.upsampling[s - 1]),
                                                  scale_block_size(cfg_.block_size, s)));
    }
    return levels;
  }

  /// meas: (m, h, w) per frame in GOP order plus the bounding keyframe (G+1 entries).
  GopForward<T> forward_measurements(const std::vector<ag::Var<T>>& meas) const {
    const int G = cfg_.gop;
    if (static_cast<int>(meas.size()) != G + 1) {
      throw ConfigError("GOP has " + std::to_string(meas.size()) + " frames, model expects " +
                        std::to_string(G) + " + bounding keyframe");
    }
    for (int i = 0; i <= G; ++i) {
      const auto& v = meas[i]->value();
      const int expect = cfg_.measurements(mode_of(i, G));
      if (v.rank() != 3 || v.dim(0) != expect) {
        throw ShapeError("frame " + std::to_string(i) + " measurements " + v.shape_string() +
                         " do not have " + std::to_string(expect) + " channels");
      }
      if (v.dim(1) != meas[0]->value().dim(1) || v.dim(2) != meas[0]->value().dim(2)) {
        throw ShapeError("frame " + std::to_string(i) + " measurement grid differs from the keyframe's");
      }
    }

    GopForward<T> out;
    out.initial.resize(G + 1);
    out.deep.resize(G + 1);
    KeyframeFeatures<T> keys[2];
    for (int k = 0; k < 2; ++k) {
      const int idx = k == 0 ? 0 : G;
      auto pyr = initial_pyramid(meas[idx], FrameMode::keyframe);
      auto ms = msem_forward<T>(key_, pyr, nullptr, nullptr, cfg_);
      keys[k] = std::move(ms.exported);
      out.initial[idx] = pyr[0];
      out.deep[idx] = finish(key_, ms.features, pyr[0]);
    }
    for (int i = 1; i < G; ++i) {
      auto pyr = initial_pyramid(meas[i], FrameMode::nonkeyframe);
      auto ms = msem_forward<T>(nonkey_, pyr, &keys[0], &keys[1], cfg_);
      out.initial[i] = pyr[0];
      out.deep[i] = finish(nonkey_, ms.features, pyr[0]);
    }
    return out;
  }

  /// frames: (1, H, W) per frame, G + 1 entries.
  GopForward<T> forward_frames(const std::vector<ag::Var<T>>& frames) const {
    std::vector<ag::Var<T>> meas;
    meas.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& v = frames[i]->value();
      if (v.rank() != 3 || v.dim(1) % cfg_.block_size != 0 || v.dim(2) % cfg_.block_size != 0) {
        throw ShapeError("frame " + v.shape_string() + " is not divisible into " +
                         std::to_string(cfg_.block_size) + "-pixel blocks");
      }
      meas.push_back(sample(frames[i], mode_of(static_cast<int>(i), cfg_.gop)));
    }
    return forward_measurements(meas);
  }

  GopReconstruction<T> reconstruct_gop(const std::vector<MeasurementTensor<T>>& measurements) const {
    ag::NoGradGuard no_grad;
    std::vector<ag::Var<T>> meas;
    for (const auto& m : measurements) meas.push_back(ag::constant(m.to_chw()));
    auto fwd = forward_measurements(meas);
    GopReconstruction<T> rec;
    for (std::size_t i = 0; i < fwd.initial.size(); ++i) {
      rec.initial.push_back(Plane<T>::from_tensor(fwd.initial[i]->value()));
      rec.deep.push_back(Plane<T>::from_tensor(fwd.deep[i]->value()));
    }
    return rec;
  }

  GopReconstruction<T> reconstruct_gop(const GopSample<T>& gop) const {
    return reconstruct_gop(sample_gop(gop, sampling_operator(FrameMode::keyframe),
                                      sampling_operator(FrameMode::nonkeyframe)));
  }

 private:
  ag::Var<T> finish(const Branch<T>& br, const std::vector<ag::Var<T>>& features,
                    const ag::Var<T>& initial) const {
    auto d = br.out(msfm_forward(br, features));
    return cfg_.global_residual ? ag::add(d, initial) : d;
  }

  ag::Parameter<T>* add_param(std::string name, Tensor<T> value) {
    params_.push_back(std::make_unique<ag::Parameter<T>>(std::move(name), std::move(value)));
    return params_.back().get();
  }

  ag::Parameter<T>* make_sampling(FrameMode m, std::uint64_t seed) {
    auto op = init_sampling_operator<T>(cfg_.ratio(m), cfg_.block_size, seed, m);
    return add_param(std::string("sampling.") + mode_prefix(m), std::move(op.weights));
  }

  static const char* mode_prefix(FrameMode m) { return m == FrameMode::keyframe ? "key" : "nonkey"; }

  ConvLayer<T> make_conv(const std::string& name, int in_c, int out_c, int k, int stride, int pad,
                         bool transposed, double gain, std::mt19937_64& rng) {
    ConvLayer<T> layer;
    layer.stride = stride;
    layer.pad = pad;
    layer.transposed = transposed;
    const double fan_in = transposed ? double(in_c) * k * k / (stride * stride) : double(in_c) * k * k;
    std::normal_distribution<double> gauss(0.0, gain * std::sqrt(2.0 / fan_in));
    Tensor<T> w(transposed ? std::vector<int>{in_c, out_c, k, k} : std::vector<int>{out_c, in_c, k, k});
    for (auto& v : w.values()) v = static_cast<T>(gauss(rng));
    layer.weight = add_param(name + ".w", std::move(w));
    layer.bias = add_param(name + ".b", Tensor<T>({out_c}));
    return layer;
  }

  ResidualBlock<T> make_rb(const std::string& name, std::mt19937_64& rng) {
    const int C = cfg_.channels;
    ResidualBlock<T> rb;
    rb.conv1 = make_conv(name + ".c1", C, C, 3, 1, 1, false, 1.0, rng);
    rb.conv2 = make_conv(name + ".c2", C, C, 3, 1, 1, false, 0.1, rng);
    return rb;
  }

  void build_branch(Branch<T>& br, FrameMode m, const ag::Parameter<T>& sampling, std::mt19937_64& rng) {
    const int S = cfg_.scales, J = cfg_.res_blocks, C = cfg_.channels;
    const std::string pre = mode_prefix(m);
    br.mode = m;

    SamplingOperator<T> op;
    op.mode = m;
    op.ratio = cfg_.ratio(m);
    op.block_size = cfg_.block_size;
    op.m = cfg_.measurements(m);
    op.weights = sampling.value;
    for (int s = 1; s <= S; ++s) {
      br.upsampling.push_back(
          add_param(pre + ".init.s" + std::to_string(s), init_upsampling_operator(op, s).weights));
    }

    for (int s = 1; s <= S; ++s) {
      const std::string sn = pre + ".s" + std::to_string(s);
      br.fem.push_back(make_conv(sn + ".fem", 1, C, 3, 1, 1, false, 1.0, rng));
      std::vector<ResidualBlock<T>> chain;
      for (int j = 1; j <= J; ++j) chain.push_back(make_rb(sn + ".rb" + std::to_string(j), rng));
      br.rb.push_back(std::move(chain));
    }

    if (cfg_.use_hffm && S > 1) {
      for (int j = 1; j <= J; ++j) {
        std::vector<Resampler<T>> stage;
        for (int to = 1; to <= S; ++to) {
          for (int from = 1; from <= S; ++from) {
            if (from == to) continue;
            Resampler<T> rs;
            rs.from_scale = from;
            rs.to_scale = to;
            const std::string rn = pre + ".hffm.j" + std::to_string(j) + ".s" + std::to_string(from) +
                                   "to" + std::to_string(to);
            for (int o = 0; o < std::abs(from - to); ++o) {
              const std::string on = rn + ".o" + std::to_string(o + 1);
              rs.steps.push_back(from > to ? make_conv(on, C, C, 2, 2, 0, true, 0.5, rng)
                                           : make_conv(on, C, C, 3, 2, 1, false, 0.5, rng));
            }
            stage.push_back(std::move(rs));
          }
        }
        br.hffm.push_back(std::move(stage));
      }
    }

    if (cfg_.use_hfim) {
      for (int s = 1; s <= S; ++s) {
        const std::string sn = pre + ".s" + std::to_string(s);
        if (m == FrameMode::keyframe) {
          std::vector<ConvLayer<T>> ex;
          if (cfg_.key_export_block) {
            for (int j = 1; j <= J; ++j)
              ex.push_back(make_conv(sn + ".export" + std::to_string(j), C, C, 3, 1, 1, false, 0.1, rng));
          }
          br.key_export.push_back(std::move(ex));
        } else {
          std::vector<ResidualBlock<T>> hr;
          for (int j = 1; j <= J; ++j) hr.push_back(make_rb(sn + ".hfim" + std::to_string(j), rng));
          br.hfim_rb.push_back(std::move(hr));
        }
      }
    }

    for (int s = 1; s < S; ++s) {
      const std::string un = pre + ".msfm.s" + std::to_string(s + 1) + "to" + std::to_string(s);
      UpModule<T> up;
      up.deconv = make_conv(un + ".deconv", C, C, 2, 2, 0, true, 1.0, rng);
      up.conv1 = make_conv(un + ".c1", C, C, 3, 1, 1, false, 1.0, rng);
      up.conv2 = make_conv(un + ".c2", C, C, 3, 1, 1, false, 0.1, rng);
      br.msfm.push_back(up);
    }
    br.out = make_conv(pre + ".out", C, 1, 3, 1, 1, false, 0.05, rng);
  }

  ModelConfig cfg_;
  std::vector<std::unique_ptr<ag::Parameter<T>>> params_;
  ag::Parameter<T>* sampling_key_ = nullptr;
  ag::Parameter<T>* sampling_nonkey_ = nullptr;
  Branch<T> key_;
  Branch<T> nonkey_;
};

}  // namespace hitvcs
