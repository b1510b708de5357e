#pragma once

// Run configuration: INI-style text with [model], [train], [data] and
// [paths] sections. Command-line flags go through the same set() so they
// override file values key by key.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitvcs/train.hpp"

namespace hitvcs {

struct DataConfig {
  std::vector<std::string> sequences;
  int width = 352;
  int height = 288;
  int max_frames = 0;
  int max_gops = 0;  // per sequence, 0 = all
};

struct PathsConfig {
  std::string checkpoint = "hitvcs.ckpt";
  std::string log = "train_log.csv";
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  PathsConfig paths;

  /// Sets "section.key" from its text form.
  void set(const std::string& qualified, const std::string& value) {
    const auto dot = qualified.find('.');
    if (dot == std::string::npos) throw ConfigError("config key must be section.key: " + qualified);
    const std::string sec = qualified.substr(0, dot), key = qualified.substr(dot + 1);
    try {
      if (sec == "model" && set_model(key, value)) return;
      if (sec == "train" && set_train(key, value)) return;
      if (sec == "data" && set_data(key, value)) return;
      if (sec == "paths" && set_paths(key, value)) return;
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad value for " + qualified + ": '" + value + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("value out of range for " + qualified + ": '" + value + "'");
    }
    throw ConfigError("unknown config key: " + qualified);
  }

  void validate() const {
    model.validate();
    train.validate();
  }

  nlohmann::json echo() const {
    return {{"model", to_json(model)},
            {"train", to_json(train)},
            {"data",
             {{"sequences", data.sequences},
              {"width", data.width},
              {"height", data.height},
              {"max_frames", data.max_frames},
              {"max_gops", data.max_gops}}},
            {"paths", {{"checkpoint", paths.checkpoint}, {"log", paths.log}}}};
  }

  static bool parse_bool(const std::string& v) {
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument(v);
  }

  static int parse_int(const std::string& v) {
    std::size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  }

  static double parse_double(const std::string& v) {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  }

  static std::uint64_t parse_u64(const std::string& v) {
    std::size_t used = 0;
    const auto r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  }

 private:
  bool set_model(const std::string& k, const std::string& v) {
    if (k == "block_size") model.block_size = parse_int(v);
    else if (k == "scales") model.scales = parse_int(v);
    else if (k == "gop") model.gop = parse_int(v);
    else if (k == "channels") model.channels = parse_int(v);
    else if (k == "res_blocks") model.res_blocks = parse_int(v);
    else if (k == "alpha_k") model.alpha_k = parse_double(v);
    else if (k == "alpha_n") model.alpha_n = parse_double(v);
    else if (k == "use_hfim") model.use_hfim = parse_bool(v);
    else if (k == "use_hffm") model.use_hffm = parse_bool(v);
    else if (k == "global_residual") model.global_residual = parse_bool(v);
    else if (k == "key_export_block") model.key_export_block = parse_bool(v);
    else if (k == "seed") model.seed = parse_u64(v);
    else return false;
    return true;
  }

  bool set_train(const std::string& k, const std::string& v) {
    if (k == "epochs") train.epochs = parse_int(v);
    else if (k == "batch_gops") train.batch_gops = parse_int(v);
    else if (k == "lr0") train.lr0 = parse_double(v);
    else if (k == "lr_half_every") train.lr_half_every = parse_int(v);
    else if (k == "seed") train.seed = parse_u64(v);
    else if (k == "beta1") train.beta1 = parse_double(v);
    else if (k == "beta2") train.beta2 = parse_double(v);
    else if (k == "eps") train.eps = parse_double(v);
    else if (k == "crop_size") train.crop_size = parse_int(v);
    else if (k == "augment") train.augment = parse_bool(v);
    else if (k == "steps_per_epoch") train.steps_per_epoch = parse_int(v);
    else return false;
    return true;
  }

  bool set_data(const std::string& k, const std::string& v) {
    if (k == "sequences") {
      data.sequences.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) data.sequences.push_back(item);
      }
    } else if (k == "width") data.width = parse_int(v);
    else if (k == "height") data.height = parse_int(v);
    else if (k == "max_frames") data.max_frames = parse_int(v);
    else if (k == "max_gops") data.max_gops = parse_int(v);
    else return false;
    return true;
  }

  bool set_paths(const std::string& k, const std::string& v) {
    if (k == "checkpoint") paths.checkpoint = v;
    else if (k == "log") paths.log = v;
    else return false;
    return true;
  }

 public:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
};

inline RunConfig parse_run_config(std::istream& is, const std::string& origin = "<config>") {
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = RunConfig::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = RunConfig::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside a section");
    cfg.set(section + "." + RunConfig::trim(line.substr(0, eq)), RunConfig::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  return parse_run_config(is, path);
}

}  // namespace hitvcs
