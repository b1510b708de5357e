#pragma once

// Checkpoint container (little-endian):
//   "HVCK" | version u32 | json_len u32 | json (config echo, epoch, ...)
//   | count u32 | per array: name_len u16, name, dtype u8 (4 = f32, 8 = f64),
//     rank u8, dims i32 x rank, values

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "hitvcs/deep_recon.hpp"
#include "hitvcs/sampling.hpp"

namespace hitvcs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"block_size", c.block_size}, {"scales", c.scales},       {"gop", c.gop},
          {"channels", c.channels},     {"res_blocks", c.res_blocks}, {"alpha_k", c.alpha_k},
          {"alpha_n", c.alpha_n},       {"use_hfim", c.use_hfim},   {"use_hffm", c.use_hffm},
          {"global_residual", c.global_residual}, {"key_export_block", c.key_export_block},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.block_size = j.at("block_size").get<int>();
    c.scales = j.at("scales").get<int>();
    c.gop = j.at("gop").get<int>();
    c.channels = j.at("channels").get<int>();
    c.res_blocks = j.at("res_blocks").get<int>();
    c.alpha_k = j.at("alpha_k").get<double>();
    c.alpha_n = j.at("alpha_n").get<double>();
    c.use_hfim = j.at("use_hfim").get<bool>();
    c.use_hffm = j.at("use_hffm").get<bool>();
    c.global_residual = j.at("global_residual").get<bool>();
    c.key_export_block = j.at("key_export_block").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model config in checkpoint: ") + e.what());
  }
  return c;
}

template <typename T>
void save_checkpoint(const HitVcsNet<T>& model, const std::string& path, nlohmann::json meta = nlohmann::json::object()) {
  meta["model"] = to_json(model.config());
  meta["parameter_count"] = model.parameter_count();
  const std::string text = meta.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path);
  os.write("HVCK", 4);
  io::put_u32(os, kCheckpointVersion);
  io::put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::put_u32(os, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    io::put_u16(os, static_cast<std::uint16_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    os.put(static_cast<char>(sizeof(T)));
    os.put(static_cast<char>(p->value.rank()));
    for (int d : p->value.shape()) io::put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(T)));
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

template <typename T>
struct LoadedCheckpoint {
  HitVcsNet<T> model;
  nlohmann::json meta;
};

inline nlohmann::json read_checkpoint_meta(std::istream& is, const std::string& path) {
  io::expect_magic(is, "HVCK");
  const auto version = io::get_u32(is);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version in " + path);
  const auto len = io::get_u32(is);
  std::string text(len, '\0');
  io::read_exact(is, text.data(), len);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint metadata in " + path + ": " + e.what());
  }
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  auto meta = read_checkpoint_meta(is, path);
  HitVcsNet<T> model(model_config_from_json(meta.at("model")));
  const auto count = io::get_u32(is);
  if (count != model.parameters().size()) throw DataError("checkpoint parameter count mismatch in " + path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(io::get_u16(is), '\0');
    io::read_exact(is, name.data(), name.size());
    const int dtype = is.get();
    const int rank = is.get();
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(io::get_u32(is));
    auto* p = model.find(name);
    if (p == nullptr || p->value.shape() != dims) throw DataError("checkpoint array " + name + " does not fit the model");
    const std::size_t n = p->value.size();
    if (dtype == 4) {
      std::vector<float> buf(n);
      io::read_exact(is, reinterpret_cast<char*>(buf.data()), n * 4);
      for (std::size_t k = 0; k < n; ++k) p->value[k] = static_cast<T>(buf[k]);
    } else if (dtype == 8) {
      std::vector<double> buf(n);
      io::read_exact(is, reinterpret_cast<char*>(buf.data()), n * 8);
      for (std::size_t k = 0; k < n; ++k) p->value[k] = static_cast<T>(buf[k]);
    } else {
      throw DataError("unknown dtype in checkpoint " + path);
    }
  }
  return {std::move(model), std::move(meta)};
}

}  // namespace hitvcs
