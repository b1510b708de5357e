#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitvcs/checkpoint.hpp"
#include "hitvcs/data.hpp"
#include "hitvcs/loss.hpp"

namespace hitvcs {

struct TrainConfig {
  int epochs = 100;
  int batch_gops = 32;
  double lr0 = 1e-4;
  int lr_half_every = 30;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Square training crop; 0 trains on full frames.
  int crop_size = 96;
  bool augment = true;
  /// 0 = one pass over the dataset per epoch.
  int steps_per_epoch = 0;

  void validate() const {
    if (epochs < 1 || batch_gops < 1 || lr_half_every < 1 || !(lr0 > 0)) {
      throw ConfigError("epochs, batch_gops, lr0 and lr_half_every must be positive");
    }
    if (crop_size < 0 || steps_per_epoch < 0) throw ConfigError("crop_size and steps_per_epoch must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},     {"batch_gops", c.batch_gops}, {"lr0", c.lr0},
          {"lr_half_every", c.lr_half_every}, {"seed", c.seed}, {"beta1", c.beta1},
          {"beta2", c.beta2},       {"eps", c.eps},               {"crop_size", c.crop_size},
          {"augment", c.augment},   {"steps_per_epoch", c.steps_per_epoch}};
}

/// lr0 * 0.5^floor(epoch / lr_half_every).
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw DomainError("negative epoch");
  return cfg.lr0 * std::pow(0.5, epoch / cfg.lr_half_every);
}

template <typename T>
class Adam {
 public:
  Adam(const HitVcsNet<T>& model, double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : model.parameters()) {
      params_.push_back(p.get());
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = static_cast<T>(beta1_ * m[i] + (1 - beta1_) * g);
        v[i] = static_cast<T>(beta2_ * v[i] + (1 - beta2_) * g * g);
        const double mh = m[i] / c1, vh = v[i] / c2;
        p.value[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<ag::Parameter<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
};

struct TrainStepLog {
  int epoch = 0;
  long step = 0;  // global step
  double lr = 0;
  LossBreakdown loss;
  double mse = 0;  // per-pixel mean over all loss terms
};

struct TrainHooks {
  std::string checkpoint_path;  // rewritten after every epoch when set
  std::string log_path;         // CSV training curve when set
  nlohmann::json run_echo = nlohmann::json::object();
  std::function<void(const TrainStepLog&)> on_step;
};

struct TrainResult {
  std::vector<TrainStepLog> curve;
  int epochs_completed = 0;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
std::vector<Tensor<T>> gop_targets(const GopSample<float>& g) {
  std::vector<Tensor<T>> out;
  for (const auto& f : g.all_frames()) out.push_back(f.template cast<T>().to_tensor());
  return out;
}

/// Sample of the step: augmented and cropped per TrainConfig.
inline GopSample<float> training_view(const GopSample<float>& src, const TrainConfig& cfg, const ModelConfig& mc,
                                      std::uint64_t seed) {
  GopSample<float> g = cfg.augment ? augment(src, mix_seed(seed, 1)) : src;
  if (cfg.crop_size > 0) g = random_crop(g, cfg.crop_size, mc.block_size, mc.scales, mix_seed(seed, 2));
  return g;
}

/// One forward/backward pass over a GOP; gradients accumulate into the model.
template <typename T>
LossBreakdown accumulate_gradients(HitVcsNet<T>& model, const GopSample<float>& gop) {
  const auto targets = gop_targets<T>(gop);
  std::vector<ag::Var<T>> frames;
  for (const auto& t : targets) frames.push_back(ag::constant(t));
  auto out = model.forward_frames(frames);
  auto [loss, breakdown] = hit_loss(out, targets);
  ag::backward(loss);
  return breakdown;
}

template <typename T>
TrainResult train(HitVcsNet<T>& model, const std::vector<GopSample<float>>& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}) {
  cfg.validate();
  const auto& mc = model.config();
  if (data.empty()) throw DataError("empty training set");
  for (const auto& g : data) {
    if (g.gop_size() != mc.gop) {
      throw ConfigError("training GOP of " + std::to_string(g.gop_size()) + " frames, model expects " +
                        std::to_string(mc.gop));
    }
  }

  std::ofstream log;
  if (!hooks.log_path.empty()) {
    log.open(hooks.log_path);
    if (!log) throw DataError("cannot write training log " + hooks.log_path);
    log << "epoch,step,lr,loss_total,key_initial,key_deep,nonkey_initial,nonkey_deep,mse\n";
    log.precision(10);
  }

  Adam<T> adam(model, cfg.beta1, cfg.beta2, cfg.eps);
  TrainResult result;
  const int n = static_cast<int>(data.size());
  const int steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (n + cfg.batch_gops - 1) / cfg.batch_gops;
  long global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<int> order;
    int pass = -1;
    for (int s = 0; s < steps; ++s) {
      model.zero_grad();
      LossBreakdown lb;
      double pixels = 0;
      for (int b = 0; b < cfg.batch_gops; ++b) {
        const long k = static_cast<long>(s) * cfg.batch_gops + b;
        if (k / n != pass) {
          pass = static_cast<int>(k / n);
          order.resize(n);
          std::iota(order.begin(), order.end(), 0);
          std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, epoch), pass));
          std::shuffle(order.begin(), order.end(), rng);
        }
        const int idx = order[k % n];
        const auto view = training_view(data[idx], cfg, mc, mix_seed(mix_seed(cfg.seed, epoch), k));
        lb += accumulate_gradients(model, view);
        pixels += 2.0 * (view.gop_size() + 1) * view.frames[0].size();
        if (cfg.steps_per_epoch == 0 && k + 1 >= n) break;
      }
      if (!std::isfinite(lb.total)) {
        throw NanLossError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(s) +
                           " (key_initial=" + std::to_string(lb.key_initial) + ", key_deep=" +
                           std::to_string(lb.key_deep) + ", nonkey_initial=" + std::to_string(lb.nonkey_initial) +
                           ", nonkey_deep=" + std::to_string(lb.nonkey_deep) + ")");
      }
      adam.step(lr);
      TrainStepLog entry{epoch, global_step++, lr, lb, lb.total / pixels};
      if (log) {
        log << entry.epoch << ',' << entry.step << ',' << entry.lr << ',' << lb.total << ',' << lb.key_initial << ','
            << lb.key_deep << ',' << lb.nonkey_initial << ',' << lb.nonkey_deep << ',' << entry.mse << '\n';
      }
      if (hooks.on_step) hooks.on_step(entry);
      result.curve.push_back(entry);
    }
    result.epochs_completed = epoch + 1;
    if (!hooks.checkpoint_path.empty()) {
      auto meta = hooks.run_echo;
      meta["epoch"] = epoch + 1;
      meta["train"] = to_json(cfg);
      save_checkpoint(model, hooks.checkpoint_path, meta);
    }
  }
  if (log) log.flush();
  return result;
}

enum class AblationVariant { full, no_hfim, no_hffm };

inline ModelConfig ablation_config(ModelConfig cfg, AblationVariant v) {
  if (v == AblationVariant::no_hfim) cfg.use_hfim = false;
  if (v == AblationVariant::no_hffm) cfg.use_hffm = false;
  return cfg;
}

inline const char* to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::no_hfim: return "no_hfim";
    case AblationVariant::no_hffm: return "no_hffm";
    default: return "full";
  }
}

/// Builds the variant's model, trains it, and returns it.
template <typename T>
HitVcsNet<T> train_ablation(AblationVariant variant, const ModelConfig& base, const std::vector<GopSample<float>>& data,
                            const TrainConfig& cfg, TrainHooks hooks = {}) {
  HitVcsNet<T> model(ablation_config(base, variant));
  hooks.run_echo["variant"] = to_string(variant);
  train(model, data, cfg, hooks);
  return model;
}

}  // namespace hitvcs
