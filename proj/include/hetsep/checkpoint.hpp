#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hetsep/model.hpp"

namespace hetsep {

inline constexpr std::string_view kCheckpointMagic = "HTSCKPT1";
inline constexpr int kCheckpointVersion = 1;

/// Layout on disk: magic, u64 header length, JSON header, then float64 tensor data in header order.
struct Checkpoint {
  ModelConfig model;
  std::string vocabulary;       // comma-joined concept names in canonical order
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;      // epochs completed
  std::map<std::string, std::vector<double>> tensors;
  std::string metadata = "{}";  // JSON text, e.g. the training configuration
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws IoError on unreadable files, DataError on corruption, ConfigError on a vocabulary mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Hex content hash of a checkpoint file, used as its id in reports.
std::string checkpoint_id(const std::filesystem::path& path);

template <typename S>
Checkpoint make_checkpoint(const Separator<S>& model, std::uint64_t step = 0, std::uint64_t epoch = 0);

/// Copies every parameter tensor into `model`; throws ConfigError if configs or tensors differ.
template <typename S>
void restore_parameters(Separator<S>& model, const Checkpoint& ckpt);

template <typename S>
Separator<S> model_from_checkpoint(const Checkpoint& ckpt) {
  Separator<S> model(ckpt.model);
  restore_parameters(model, ckpt);
  return model;
}

}  // namespace hetsep
