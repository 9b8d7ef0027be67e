#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsrvae/config.hpp"
#include "dsrvae/nn/networks.hpp"

namespace dsrvae {

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'R', 'V', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainMeta {
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::string phase = "dae";
  std::vector<double> loss_history;  // per-iteration totals
};

// Layout: magic(8) | version(u32) | header_len(u64) | header json | payload.
// Header carries the model config, metadata and the array manifest; payload
// is float32 value/adam_m/adam_v blocks per array, in manifest order. The
// file size is validated against the manifest before any state is exposed.
template <class T>
void save_checkpoint(const ParameterSet<T>& ps, const ModelConfig& cfg,
                     const TrainMeta& meta, const std::string& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = cfgio::to_json(cfg);
  header["meta"] = {{"iteration", meta.iteration},
                    {"seed", meta.seed},
                    {"phase", meta.phase},
                    {"loss_history", meta.loss_history}};
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : ps.items())
    manifest.push_back({{"name", p.name}, {"owner", p.owner}, {"shape", p.value.shape}});
  header["arrays"] = manifest;
  const std::string hs = header.dump();

  // write to a temp file then rename: a failed write never leaves a
  // truncated checkpoint under the target name
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kCheckpointMagic, 8);
    const std::uint32_t ver = kCheckpointVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf;
    for (const auto& p : ps.items()) {
      for (const Tensor<T>* t : {&p.value, &p.adam_m, &p.adam_v}) {
        buf.resize(t->size());
        for (std::size_t i = 0; i < t->size(); ++i)
          buf[i] = static_cast<float>(t->v[i]);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
      }
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
  }
  std::filesystem::rename(tmp, path);
}

template <class T>
struct LoadedCheckpoint {
  ParameterSet<T> params;
  ModelConfig config;
  TrainMeta meta;
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (!f || ver != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch in " + path + ": got " +
                             std::to_string(ver) + ", expected " +
                             std::to_string(kCheckpointVersion));
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  LoadedCheckpoint<T> out;
  out.config = cfgio::model_from_json(header.at("model"));
  const auto& m = header.at("meta");
  out.meta.iteration = m.at("iteration");
  out.meta.seed = m.at("seed");
  out.meta.phase = m.at("phase");
  out.meta.loss_history = m.at("loss_history").get<std::vector<double>>();

  // validate the manifest against the shapes dictated by the model config
  ParameterSet<T> ps = init_parameters<T>(out.config, 0, true);
  const auto& manifest = header.at("arrays");
  if (manifest.size() != ps.items().size())
    throw std::runtime_error("checkpoint array count mismatch in " + path);
  std::uint64_t payload = 0;
  for (std::size_t i = 0; i < ps.items().size(); ++i) {
    const auto& entry = manifest[i];
    const auto& p = ps.items()[i];
    if (entry.at("name") != p.name)
      throw std::runtime_error("checkpoint manifest mismatch at array '" +
                               entry.at("name").get<std::string>() + "' (expected '" +
                               p.name + "')");
    if (entry.at("shape").get<std::vector<int>>() != p.value.shape)
      throw std::runtime_error("checkpoint shape mismatch for array '" + p.name + "'");
    payload += 3u * p.value.size() * sizeof(float);
  }
  const std::uint64_t expected = 8 + sizeof(std::uint32_t) + sizeof(std::uint64_t) +
                                 hlen + payload;
  if (std::filesystem::file_size(path) != expected)
    throw std::runtime_error("checkpoint size mismatch (truncated or corrupt): " + path);

  std::vector<float> buf;
  for (auto& p : ps.items()) {
    for (Tensor<T>* t : {&p.value, &p.adam_m, &p.adam_v}) {
      buf.resize(t->size());
      f.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
      for (std::size_t i = 0; i < t->size(); ++i)
        t->v[i] = static_cast<T>(buf[i]);
    }
  }
  out.params = std::move(ps);
  return out;
}

}  // namespace dsrvae
