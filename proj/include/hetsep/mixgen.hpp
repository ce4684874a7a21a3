#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsep/acoustics.hpp"
#include "hetsep/conditions.hpp"
#include "hetsep/corpus.hpp"
#include "hetsep/signal.hpp"

namespace hetsep {

enum class SpatialPairing { kAlwaysNearFar, kUniformOverPairs };

std::string_view to_string(SpatialPairing p) noexcept;
SpatialPairing spatial_pairing_from_string(std::string_view s);

/// One collection taking part in generation.
struct DomainEntry {
  DomainSpec spec;
  double prior = 1.0;
  std::map<Concept, double> condition_priors;  // P(v | domain)
  std::optional<Range> snr_range;              // resolved by GenerationConfig::resolve()
  std::optional<SpatialPairing> spatial_pairing;
  std::shared_ptr<const CorpusSplit> corpus;
};

struct GenerationConfig {
  std::vector<DomainEntry> domains;
  /// Probability of a non-discriminative pair, indexed by condition_index().
  std::array<double, kConditionCount> degenerate_ratio{};
  /// Among degenerate draws, the share where every source matches (s_T = x).
  double degenerate_all_match_fraction = 0.5;
  bool exclude_ambiguous_energy = true;
  Range snr_range_energy_conditioned{1.0, 5.0};
  double energy_ambiguity_db = 1.0;
  Range overlap{0.75, 1.0};
  std::size_t clip_samples = kDefaultClipSamples;
  int sample_rate = kDefaultSampleRate;
  int max_order = kDefaultReflectionOrder;
  int max_retries = 1000;
  std::optional<std::filesystem::path> rir_cache_dir;

  /// Fills per-domain SNR ranges and pairing policies that were left unset:
  /// WSJ and TOY use [0, 5] dB, SVOX [0, 2.5] dB, SLIB follows its partner
  /// (SVOX's range when SVOX is configured, else [0, 5]). SLIB pairs one near
  /// and one far source unless trained with SVOX, where all pairings are equally likely.
  void resolve();
  /// Throws ConfigError on inconsistent priors, ratios or missing corpora.
  void validate() const;
};

/// Per-source provenance of a generated mixture.
struct SourceInfo {
  std::string record_id;
  std::string speaker_id;
  ConceptProfile profile;
  std::optional<SourcePlacement> placement;
  std::size_t onset = 0;  // samples of leading silence from the overlap delay
  double gain = 1.0;      // SNR scaling applied
};

struct MixtureSample {
  Waveform mixture;
  Waveform target;
  Waveform other;
  ConditionVector condition{};
  Concept query = Concept::kEnergyHigh;
  Degeneracy degeneracy = Degeneracy::kNone;
  DomainName domain = DomainName::kToy;
  std::array<SourceInfo, 2> sources;
  std::optional<RoomSpec> room;
  double snr_db = 0.0;         // louder over quieter, dB
  std::size_t louder = 0;      // index of the louder source
  double overlap = 1.0;
  std::uint64_t base_seed = 0;
  Partition split = Partition::kTrain;
  std::uint64_t index = 0;

  /// Content hash of every waveform sample and the generation metadata.
  std::uint64_t fingerprint() const;
};

/// The categorical draws that precede source selection (domain, query, degeneracy).
struct MixturePlan {
  std::size_t domain = 0;
  Concept query = Concept::kEnergyHigh;
  Degeneracy degeneracy = Degeneracy::kNone;
};

MixturePlan plan_mixture(const GenerationConfig& config, Partition split, std::uint64_t index,
                         std::uint64_t base_seed, std::optional<Concept> forced = std::nullopt);

/// Generates one mixture. The result is a pure function of (config, split, index, base_seed, forced).
/// Throws DataError when the sampling constraints cannot be met within max_retries draws.
MixtureSample sample_mixture(const GenerationConfig& config, Partition split, std::uint64_t index,
                             std::uint64_t base_seed, std::optional<Concept> forced = std::nullopt);

/// Generates many indices with `workers` threads; output order follows `indices`.
std::vector<MixtureSample> sample_mixtures(const GenerationConfig& config, Partition split,
                                           std::span<const std::uint64_t> indices, std::uint64_t base_seed,
                                           std::optional<Concept> forced = std::nullopt, unsigned workers = 1);

/// Lazy sequence of training mixtures for one epoch: indices epoch*n ... epoch*n + n - 1.
class Epoch {
 public:
  Epoch(const GenerationConfig& config, std::size_t size, std::uint64_t base_seed, std::uint64_t epoch_index)
      : config_(&config), size_(size), base_seed_(base_seed), first_(epoch_index * size) {}

  std::size_t size() const noexcept { return size_; }
  std::uint64_t index_of(std::size_t i) const noexcept { return first_ + i; }
  MixtureSample operator[](std::size_t i) const {
    return sample_mixture(*config_, Partition::kTrain, index_of(i), base_seed_);
  }

  class iterator {
   public:
    using value_type = MixtureSample;
    using difference_type = std::ptrdiff_t;
    iterator() = default;
    iterator(const Epoch* epoch, std::size_t pos) : epoch_(epoch), pos_(pos) {}
    MixtureSample operator*() const { return (*epoch_)[pos_]; }
    iterator& operator++() {
      ++pos_;
      return *this;
    }
    iterator operator++(int) {
      auto copy = *this;
      ++pos_;
      return copy;
    }
    bool operator==(const iterator& o) const { return pos_ == o.pos_; }

   private:
    const Epoch* epoch_ = nullptr;
    std::size_t pos_ = 0;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size_}; }

 private:
  const GenerationConfig* config_;
  std::size_t size_;
  std::uint64_t base_seed_;
  std::uint64_t first_;
};

inline Epoch make_epoch(const GenerationConfig& config, std::size_t n, std::uint64_t base_seed,
                        std::uint64_t epoch_index) {
  return Epoch(config, n, base_seed, epoch_index);
}

/// Base seed used for the fixed evaluation set of `query`.
std::uint64_t eval_set_seed(std::uint64_t seed, Concept query);

/// n fixed mixtures all conditioned on `query`, drawn from `split` (test by default).
std::vector<MixtureSample> make_eval_set(const GenerationConfig& config, Concept query, std::size_t n,
                                         std::uint64_t seed, Partition split = Partition::kTest,
                                         unsigned workers = 1);

/// Writes x/s_T/s_O WAV triplets plus metadata.jsonl.
void save_eval_set(const std::vector<MixtureSample>& samples, const std::filesystem::path& dir);
/// Reads a directory written by save_eval_set.
std::vector<MixtureSample> load_eval_set(const std::filesystem::path& dir);

}  // namespace hetsep
