#include "hetsep/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "hetsep/config_io.hpp"
#include "hetsep/errors.hpp"
#include "hetsep/rng.hpp"

namespace hetsep {

using nlohmann::json;

void to_json(json& j, const ModelConfig& c) {
  j = json{{"num_blocks", c.num_blocks},
           {"channels", c.channels},
           {"encoder_bases", c.encoder_bases},
           {"kernel_taps", c.kernel_taps},
           {"hop", c.hop},
           {"vocab_size", c.vocab_size},
           {"conditioned", c.conditioned},
           {"block_depth", c.block_depth},
           {"expansion_channels", c.expansion_channels},
           {"depthwise_kernel", c.depthwise_kernel},
           {"leaky_slope", c.leaky_slope}};
}

void from_json(const json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_blocks") c.num_blocks = value.get<int>();
      else if (key == "channels") c.channels = value.get<int>();
      else if (key == "encoder_bases") c.encoder_bases = value.get<int>();
      else if (key == "kernel_taps") c.kernel_taps = value.get<int>();
      else if (key == "hop") c.hop = value.get<int>();
      else if (key == "vocab_size") c.vocab_size = value.get<int>();
      else if (key == "conditioned") c.conditioned = value.get<bool>();
      else if (key == "block_depth") c.block_depth = value.get<int>();
      else if (key == "expansion_channels") c.expansion_channels = value.get<int>();
      else if (key == "depthwise_kernel") c.depthwise_kernel = value.get<int>();
      else if (key == "leaky_slope") c.leaky_slope = value.get<double>();
      else throw ConfigError("model config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("model config: bad value for '{}': {}", key, e.what()));
    }
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json index = json::array();
  std::size_t offset = 0;
  ContentHash hash;
  for (const auto& [name, data] : ckpt.tensors) {
    index.push_back({{"name", name}, {"offset", offset}, {"size", data.size()}});
    offset += data.size();
    hash.add(std::span<const double>(data));
  }
  json metadata;
  try {
    metadata = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  const json header{{"format_version", kCheckpointVersion},
                    {"model", ckpt.model},
                    {"vocabulary", ckpt.vocabulary.empty() ? vocabulary_signature() : ckpt.vocabulary},
                    {"step", ckpt.step},
                    {"epoch", ckpt.epoch},
                    {"tensors", std::move(index)},
                    {"data_hash", hash.hex()},
                    {"metadata", std::move(metadata)}};
  const std::string text = header.dump();
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic.data(), std::streamsize(kCheckpointMagic.size()));
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), std::streamsize(text.size()));
    for (const auto& [name, data] : ckpt.tensors) {
      out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), std::streamsize(magic.size()));
  if (!in || magic != kCheckpointMagic) throw DataError(path.string() + " is not a checkpoint");
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || length > (std::uint64_t(1) << 32)) throw DataError("corrupt checkpoint header in " + path.string());
  std::string text(length, '\0');
  in.read(text.data(), std::streamsize(length));
  if (!in) throw DataError("truncated checkpoint header in " + path.string());
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointVersion) {
    throw DataError(fmt::format("unsupported checkpoint version in {}", path.string()));
  }
  Checkpoint ckpt;
  ckpt.vocabulary = header.at("vocabulary").get<std::string>();
  if (ckpt.vocabulary != vocabulary_signature()) {
    throw ConfigError(fmt::format("checkpoint vocabulary order '{}' does not match '{}'", ckpt.vocabulary,
                                  vocabulary_signature()));
  }
  ckpt.model = header.at("model").get<ModelConfig>();
  ckpt.step = header.at("step").get<std::uint64_t>();
  ckpt.epoch = header.at("epoch").get<std::uint64_t>();
  ckpt.metadata = header.at("metadata").dump();
  ContentHash hash;
  for (const auto& t : header.at("tensors")) {
    std::vector<double> data(t.at("size").get<std::size_t>());
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint data in " + path.string());
    hash.add(std::span<const double>(data));
    ckpt.tensors.emplace(t.at("name").get<std::string>(), std::move(data));
  }
  if (hash.hex() != header.at("data_hash").get<std::string>()) {
    throw DataError("checkpoint data hash mismatch in " + path.string());
  }
  return ckpt;
}

std::string checkpoint_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  ContentHash h;
  h.bytes(bytes.data(), bytes.size());
  return h.hex();
}

template <typename S>
Checkpoint make_checkpoint(const Separator<S>& model, std::uint64_t step, std::uint64_t epoch) {
  Checkpoint ckpt;
  ckpt.model = model.config();
  ckpt.vocabulary = vocabulary_signature();
  ckpt.step = step;
  ckpt.epoch = epoch;
  const auto params = model.parameters();
  for (const auto& t : model.layout()) {
    ckpt.tensors.emplace(t.name, std::vector<double>(params.begin() + std::ptrdiff_t(t.offset),
                                                     params.begin() + std::ptrdiff_t(t.offset + t.size())));
  }
  return ckpt;
}

template <typename S>
void restore_parameters(Separator<S>& model, const Checkpoint& ckpt) {
  if (!(ckpt.model == model.config())) throw ConfigError("checkpoint model config differs from the target model");
  auto params = model.parameters();
  for (const auto& t : model.layout()) {
    const auto it = ckpt.tensors.find(t.name);
    if (it == ckpt.tensors.end()) throw ConfigError("checkpoint lacks tensor '" + t.name + "'");
    if (it->second.size() != t.size()) throw ConfigError("checkpoint tensor '" + t.name + "' has the wrong size");
    for (std::size_t i = 0; i < t.size(); ++i) params[t.offset + i] = S(it->second[i]);
  }
}

template Checkpoint make_checkpoint<float>(const Separator<float>&, std::uint64_t, std::uint64_t);
template Checkpoint make_checkpoint<double>(const Separator<double>&, std::uint64_t, std::uint64_t);
template void restore_parameters<float>(Separator<float>&, const Checkpoint&);
template void restore_parameters<double>(Separator<double>&, const Checkpoint&);

}  // namespace hetsep
