// hitvcs: train / evaluate / compress / decompress video with the
// multi-scale CS network.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "hitvcs/hitvcs.hpp"

namespace fs = std::filesystem;
using namespace hitvcs;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNan = 4 };

std::string data_root() {
  const char* r = std::getenv("HITVCS_DATA_ROOT");
  return r ? std::string(r) : std::string();
}

std::string resolve(const std::string& path) {
  const auto root = data_root();
  if (root.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  return (fs::path(root) / path).string();
}

// Every sequence directory / .yuv file directly under the data root.
std::vector<std::string> root_sequences() {
  std::vector<std::string> out;
  const auto root = data_root();
  if (root.empty() || !fs::is_directory(root)) return out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() || e.path().extension() == ".yuv") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string sequence_name(const std::string& path) {
  fs::path p(path);
  if (!p.has_filename()) p = p.parent_path();
  return p.stem().string();
}

// Flags that map one-to-one onto config keys.
struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, bool>> switches;
  bool no_hfim = false, no_hffm = false;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }

  void add_model(CLI::App* app) {
    add(app, "--alpha-n", "model.alpha_n", "non-keyframe sampling ratio");
    add(app, "--alpha-k", "model.alpha_k", "keyframe sampling ratio");
    add(app, "--gop", "model.gop", "GOP size");
    add(app, "--block", "model.block_size", "sampling block size");
    add(app, "--scales", "model.scales", "number of scales");
    add(app, "--channels", "model.channels", "feature channels");
    add(app, "--res-blocks", "model.res_blocks", "residual blocks per scale");
    add(app, "--model-seed", "model.seed", "model initialization seed");
    app->add_flag("--no-hfim", no_hfim, "disable cross-frame interaction");
    app->add_flag("--no-hffm", no_hffm, "disable cross-scale fusion");
  }

  void add_train(CLI::App* app) {
    add(app, "--epochs", "train.epochs", "training epochs");
    add(app, "--batch", "train.batch_gops", "GOPs per step");
    add(app, "--lr", "train.lr0", "initial learning rate");
    add(app, "--lr-half-every", "train.lr_half_every", "epochs per learning-rate halving");
    add(app, "--seed", "train.seed", "training seed");
    add(app, "--crop", "train.crop_size", "training crop size (0 = full frames)");
    add(app, "--steps-per-epoch", "train.steps_per_epoch", "steps per epoch (0 = one pass)");
    add(app, "--width", "data.width", "frame width for .yuv input");
    add(app, "--height", "data.height", "frame height for .yuv input");
    add(app, "--max-frames", "data.max_frames", "frames read per sequence");
    add(app, "--max-gops", "data.max_gops", "GOPs used per sequence");
  }

  void apply(RunConfig& cfg) const {
    for (const auto& [k, v] : values) cfg.set(k, v);
    if (no_hfim) cfg.model.use_hfim = false;
    if (no_hffm) cfg.model.use_hffm = false;
  }
};

struct TrainArgs {
  std::string config;
  std::vector<std::string> data;
  std::string checkpoint, log, variant = "full";
  int log_every = 10;
  Overrides ov;
};

RunConfig build_config(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  a.ov.apply(cfg);
  if (!a.data.empty()) cfg.data.sequences = a.data;
  if (!a.checkpoint.empty()) cfg.paths.checkpoint = a.checkpoint;
  if (!a.log.empty()) cfg.paths.log = a.log;
  if (cfg.data.sequences.empty()) cfg.data.sequences = root_sequences();
  cfg.validate();
  return cfg;
}

std::vector<GopSample<float>> load_training_gops(const RunConfig& cfg) {
  if (cfg.data.sequences.empty()) throw DataError("no training sequences (use --data or HITVCS_DATA_ROOT)");
  std::vector<GopSample<float>> gops;
  for (const auto& s : cfg.data.sequences) {
    auto frames = load_sequence(resolve(s), cfg.data.width, cfg.data.height, cfg.data.max_frames);
    auto g = partition_gops(frames, cfg.model.gop);
    if (cfg.data.max_gops > 0 && static_cast<int>(g.size()) > cfg.data.max_gops) g.resize(cfg.data.max_gops);
    gops.insert(gops.end(), g.begin(), g.end());
  }
  return gops;
}

int run_train(const TrainArgs& a, bool ablate) {
  const RunConfig cfg = build_config(a);
  const auto data = load_training_gops(cfg);
  TrainHooks hooks;
  hooks.checkpoint_path = cfg.paths.checkpoint;
  hooks.log_path = cfg.paths.log;
  hooks.run_echo = cfg.echo();
  hooks.on_step = [&](const TrainStepLog& s) {
    if (a.log_every > 0 && s.step % a.log_every == 0) {
      std::cerr << "epoch " << s.epoch << " step " << s.step << " lr " << s.lr << " loss " << s.loss.total
                << " mse " << s.mse << '\n';
    }
  };
  std::cerr << "training on " << data.size() << " GOPs\n";
  if (ablate) {
    AblationVariant v = AblationVariant::full;
    if (a.variant == "no_hfim") v = AblationVariant::no_hfim;
    else if (a.variant == "no_hffm") v = AblationVariant::no_hffm;
    else if (a.variant != "full") throw ConfigError("unknown ablation variant: " + a.variant);
    train_ablation<float>(v, cfg.model, data, cfg.train, hooks);
  } else {
    HitVcsNet<float> model(cfg.model);
    train(model, data, cfg.train, hooks);
  }
  std::cout << "checkpoint " << cfg.paths.checkpoint << '\n';
  return kOk;
}

struct IoArgs {
  std::string checkpoint, input, output, reference, archive;
  int width = 352, height = 288, max_frames = 0;
  std::optional<double> alpha_n;
};

int run_compress(const IoArgs& a) {
  const auto ck = load_checkpoint<float>(a.checkpoint);
  const auto& mc = ck.model.config();
  auto frames = load_sequence(resolve(a.input), a.width, a.height, a.max_frames);
  const std::size_t full = frames.size() / mc.gop * mc.gop;
  if (full == 0) throw DataError("need at least one GOP of " + std::to_string(mc.gop) + " frames");
  const std::size_t keep = full < frames.size() ? full + 1 : full;  // closing keyframe when available
  if (keep < frames.size()) std::cerr << "dropping " << frames.size() - keep << " trailing frames\n";
  frames.resize(keep);

  const auto key = ck.model.sampling_operator(FrameMode::keyframe);
  const auto nonkey = ck.model.sampling_operator(FrameMode::nonkeyframe);
  std::vector<MeasurementTensor<float>> ys;
  std::size_t measurements = 0, pixels = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const bool is_key = i % mc.gop == 0;
    ys.push_back(sample_frame(frames[i], is_key ? key : nonkey));
    measurements += ys.back().values.size();
    pixels += frames[i].size();
  }
  write_archive(a.output, ys);
  std::cout << "frames " << ys.size() << " measurements " << measurements << " pixels " << pixels << " rate "
            << std::setprecision(6) << static_cast<double>(measurements) / pixels << '\n';
  return kOk;
}

int run_decompress(const IoArgs& a) {
  const auto ck = load_checkpoint<float>(a.checkpoint);
  const auto& mc = ck.model.config();
  const auto ys = read_archive(a.archive);
  if (ys.empty()) throw DataError("empty archive " + a.archive);
  const int G = mc.gop;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto mode = i % G == 0 ? FrameMode::keyframe : FrameMode::nonkeyframe;
    const double want = mode == FrameMode::keyframe ? mc.alpha_k : mc.alpha_n;
    if (std::abs(ys[i].ratio - want) > 1e-6 || ys[i].channels != mc.measurements(mode) ||
        ys[i].block_size != mc.block_size) {
      throw ConfigError("archive frame " + std::to_string(i) + " has ratio " + std::to_string(ys[i].ratio) +
                        " / block " + std::to_string(ys[i].block_size) + ", checkpoint expects " +
                        std::to_string(want) + " / " + std::to_string(mc.block_size));
    }
    if (a.alpha_n && mode == FrameMode::nonkeyframe && std::abs(ys[i].ratio - *a.alpha_n) > 1e-6) {
      throw ConfigError("archive non-keyframe ratio " + std::to_string(ys[i].ratio) + " differs from --alpha-n " +
                        std::to_string(*a.alpha_n));
    }
  }
  const std::size_t gops = ys.size() / G;
  if (gops == 0) throw DataError("archive holds fewer frames than one GOP");

  std::vector<FramePlane> initial(ys.size()), deep(ys.size());
  for (std::size_t g = 0; g < gops; ++g) {
    std::vector<MeasurementTensor<float>> meas(ys.begin() + g * G, ys.begin() + (g + 1) * G);
    const std::size_t next = (g + 1) * G;
    meas.push_back(next < ys.size() ? ys[next] : ys[g * G]);
    const auto rec = ck.model.reconstruct_gop(meas);
    for (int i = 0; i <= G; ++i) {
      const std::size_t idx = g * G + i;
      if (i == G && next >= ys.size()) break;
      if (idx >= ys.size()) break;
      initial[idx] = rec.initial[i];
      deep[idx] = rec.deep[i];
    }
    std::cerr << "gop " << g + 1 << "/" << gops << '\n';
  }
  if (ys.size() % G > 1) std::cerr << "warning: " << ys.size() % G - 1 << " frames past the last GOP left empty\n";

  fs::create_directories(a.output);
  char name[64];
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (deep[i].size() == 0) continue;
    std::snprintf(name, sizeof name, "initial_%05zu.png", i);
    write_frame_png((fs::path(a.output) / name).string(), initial[i]);
    std::snprintf(name, sizeof name, "deep_%05zu.png", i);
    write_frame_png((fs::path(a.output) / name).string(), deep[i]);
  }

  if (!a.reference.empty()) {
    const auto ref = load_sequence(resolve(a.reference), a.width, a.height, static_cast<int>(ys.size()));
    MetricReport report;
    const std::string seq = sequence_name(a.reference);
    for (std::size_t i = 0; i < ys.size() && i < ref.size(); ++i) {
      if (deep[i].size() == 0) continue;
      FrameMetric fm;
      fm.sequence = seq;
      fm.frame_index = static_cast<int>(i);
      fm.frame_type = i % G == 0 ? "key" : "nonkey";
      fm.psnr_db = psnr(deep[i], ref[i]);
      fm.ssim = ssim(deep[i], ref[i]);
      fm.initial_psnr_db = psnr(initial[i], ref[i]);
      fm.initial_ssim = ssim(initial[i], ref[i]);
      report.frames.push_back(fm);
      report.average.psnr_db += fm.psnr_db;
      report.average.ssim += fm.ssim;
      ++report.average.frames;
    }
    if (report.average.frames > 0) {
      report.average.psnr_db /= report.average.frames;
      report.average.ssim /= report.average.frames;
    }
    write_frames_csv((fs::path(a.output) / "metrics.csv").string(), report);
    std::cout << "average psnr " << report.average.psnr_db << " ssim " << report.average.ssim << '\n';
  }
  std::cout << "frames " << ys.size() << " written to " << a.output << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, output = "eval", frames = "all";
  std::vector<std::string> data;
  int gops = 2, width = 352, height = 288;
};

int run_eval(const EvalArgs& a) {
  const auto ck = load_checkpoint<float>(a.checkpoint);
  EvalProtocol protocol;
  protocol.gops = a.gops;
  if (a.frames == "nonkey") protocol.frames = FrameSelection::nonkey;
  else if (a.frames != "all") throw ConfigError("--frames must be all or nonkey, got " + a.frames);
  auto paths = a.data.empty() ? root_sequences() : a.data;
  if (paths.empty()) throw DataError("no evaluation sequences (use --data or HITVCS_DATA_ROOT)");

  const int needed = protocol.gops * ck.model.config().gop + 1;
  std::vector<std::pair<std::string, std::vector<FramePlane>>> seqs;
  for (const auto& p : paths) seqs.emplace_back(sequence_name(p), load_sequence(resolve(p), a.width, a.height, needed));

  auto report = evaluate(ck.model, seqs, protocol);
  report.metadata["checkpoint"] = a.checkpoint;
  report.metadata["config"] = ck.meta;
  report.metadata["full_scale_reference"] = full_scale_reference(ck.model.config().alpha_n);

  write_frames_csv(a.output + "_frames.csv", report);
  write_table_csv(a.output + "_table.csv", report);
  std::ofstream(a.output + ".json") << to_json(report).dump(2) << '\n';

  std::cout << std::fixed << std::setprecision(2);
  for (const auto& [name, s] : report.sequences) {
    std::cout << std::left << std::setw(16) << name << " psnr " << s.psnr_db << " ssim " << std::setprecision(4)
              << s.ssim << std::setprecision(2) << '\n';
  }
  std::cout << std::setw(16) << "Average" << " psnr " << report.average.psnr_db << " ssim " << std::setprecision(4)
            << report.average.ssim << std::setprecision(2) << '\n';
  std::cout << std::setw(16) << "Non-key" << " psnr " << report.nonkey_average.psnr_db << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale video compressive sensing codec"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto add_train_cmd = [&](const char* name, const char* help) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--config", ta.config, "run configuration file");
    c->add_option("--data", ta.data, "training sequences (directories or .yuv)");
    c->add_option("--checkpoint", ta.checkpoint, "output checkpoint");
    c->add_option("--log", ta.log, "training curve CSV");
    c->add_option("--log-every", ta.log_every, "progress line every N steps");
    ta.ov.add_model(c);
    ta.ov.add_train(c);
    return c;
  };
  auto* train_cmd = add_train_cmd("train", "train a model");
  auto* ablate_cmd = add_train_cmd("ablate", "train an ablation variant");
  ablate_cmd->add_option("--variant", ta.variant, "full, no_hfim or no_hffm");

  auto* init_cmd = app.add_subcommand("init", "write an untrained checkpoint");
  init_cmd->add_option("--config", ta.config, "run configuration file");
  init_cmd->add_option("--checkpoint", ta.checkpoint, "output checkpoint")->required();
  ta.ov.add_model(init_cmd);

  IoArgs ia;
  auto* compress_cmd = app.add_subcommand("compress", "sample a sequence into a measurement archive");
  compress_cmd->add_option("--checkpoint", ia.checkpoint)->required();
  compress_cmd->add_option("--input", ia.input, "frame directory or .yuv")->required();
  compress_cmd->add_option("--output", ia.output, "archive path")->required();
  compress_cmd->add_option("--width", ia.width);
  compress_cmd->add_option("--height", ia.height);
  compress_cmd->add_option("--max-frames", ia.max_frames);

  auto* decompress_cmd = app.add_subcommand("decompress", "reconstruct frames from an archive");
  decompress_cmd->add_option("--checkpoint", ia.checkpoint)->required();
  decompress_cmd->add_option("--archive", ia.archive)->required();
  decompress_cmd->add_option("--output", ia.output, "output directory")->required();
  decompress_cmd->add_option("--reference", ia.reference, "ground-truth sequence for metrics");
  decompress_cmd->add_option("--alpha-n", ia.alpha_n, "expected non-keyframe ratio");
  decompress_cmd->add_option("--width", ia.width);
  decompress_cmd->add_option("--height", ia.height);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on test sequences");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--data", ea.data, "test sequences");
  eval_cmd->add_option("--output", ea.output, "report path prefix");
  eval_cmd->add_option("--frames", ea.frames, "all or nonkey");
  eval_cmd->add_option("--gops", ea.gops, "GOPs per sequence");
  eval_cmd->add_option("--width", ea.width);
  eval_cmd->add_option("--height", ea.height);

  std::string synth_out;
  int synth_frames = 17, synth_w = 352, synth_h = 288;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic test sequence");
  synth_cmd->add_option("--output", synth_out, "output directory")->required();
  synth_cmd->add_option("--frames", synth_frames);
  synth_cmd->add_option("--width", synth_w);
  synth_cmd->add_option("--height", synth_h);
  synth_cmd->add_option("--seed", synth_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train_cmd) return run_train(ta, false);
    if (*ablate_cmd) return run_train(ta, true);
    if (*init_cmd) {
      RunConfig cfg = ta.config.empty() ? RunConfig{} : load_run_config(ta.config);
      ta.ov.apply(cfg);
      cfg.model.validate();
      HitVcsNet<float> model(cfg.model);
      save_checkpoint(model, ta.checkpoint, cfg.echo());
      std::cout << "parameters " << model.parameter_count() << '\n';
      return kOk;
    }
    if (*compress_cmd) return run_compress(ia);
    if (*decompress_cmd) return run_decompress(ia);
    if (*eval_cmd) return run_eval(ea);
    if (*synth_cmd) {
      write_image_dir(synth_out, synthetic_sequence(synth_frames, synth_h, synth_w, synth_seed));
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NanLossError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kNan;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
