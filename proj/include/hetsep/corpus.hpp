#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetsep/acoustics.hpp"
#include "hetsep/conditions.hpp"
#include "hetsep/rng.hpp"
#include "hetsep/signal.hpp"

namespace hetsep {

enum class Gender { kFemale, kMale };
enum class Language { kEnglish, kFrench, kGerman, kSpanish };
enum class Partition { kTrain, kVal, kTest, kAll };
enum class DomainName { kWsj, kSlib, kSvox, kToy };

inline constexpr int kManifestSchemaVersion = 1;

std::string_view to_string(Gender g) noexcept;       // female | male
std::string_view to_string(Language l) noexcept;     // en | fr | de | es
std::string_view to_string(Partition p) noexcept;    // train | val | test | all
std::string_view to_string(DomainName d) noexcept;   // WSJ | SLIB | SVOX | TOY
Gender gender_from_string(std::string_view s);
Language language_from_string(std::string_view s);
Partition partition_from_string(std::string_view s);
DomainName domain_from_string(std::string_view s);

Concept to_concept(Gender g) noexcept;
Concept to_concept(Language l) noexcept;

/// Proportions over en, fr, de, es.
struct LanguageMix {
  std::array<double, 4> weights{1.0, 0.0, 0.0, 0.0};

  static LanguageMix english_only() { return {}; }
  static LanguageMix voxforge() { return {{0.53, 0.15, 0.16, 0.16}}; }
};

struct DomainSpec {
  DomainName name = DomainName::kToy;
  std::vector<Condition> conditions;
  bool reverberant = false;
  std::optional<RoomRanges> rooms;
  LanguageMix language_mix;

  bool has(Condition c) const noexcept;
};

/// Table presets: WSJ {E, G} anechoic; SLIB {E, G, S} and SVOX {E, L, S} reverberant;
/// TOY {E, G, L} anechoic with the Voxforge language mix.
DomainSpec domain_preset(DomainName name);

struct SourceRecord {
  std::string record_id;
  std::string audio_ref;  // WAV path (relative to the manifest) or a "toy:" synthesis spec
  std::string speaker_id;
  std::optional<Gender> gender;
  std::optional<Language> language;
  double duration = 0.0;  // seconds

  bool operator==(const SourceRecord&) const = default;
};

struct Manifest {
  DomainSpec domain;
  Partition partition = Partition::kAll;
  std::vector<SourceRecord> records;
  std::filesystem::path base_dir;  // resolves relative audio paths

  std::vector<std::string> speakers() const;
};

/// Throws DataError naming the offending record on a schema violation.
void validate_manifest(const Manifest& m);

/// JSON-lines: a header line {"schema_version", "domain", "partition"} then one record per line.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

struct CorpusSplit {
  Manifest train;
  Manifest val;
  Manifest test;

  const Manifest& get(Partition p) const;
};

/// Throws DataError when any speaker appears in more than one partition.
void check_speaker_disjoint(const CorpusSplit& split);

/// Loads train/val/test manifests and checks speaker disjointness.
CorpusSplit load_corpus(const std::filesystem::path& train, const std::filesystem::path& val,
                        const std::filesystem::path& test);

/// Speaker-disjoint partition with speaker counts rounded to the nearest integer
/// (each partition non-empty). Deterministic in `seed`.
CorpusSplit split_speakers(const Manifest& all, std::array<double, 3> ratios = {8, 1, 1},
                           std::uint64_t seed = 0);

/// split_speakers applied per gender stratum so every partition keeps both genders.
CorpusSplit split_speakers_by_gender(const Manifest& all, std::array<double, 3> ratios = {8, 1, 1},
                                     std::uint64_t seed = 0);

/// Recording and speaker counts listed for the real collections; empty for TOY.
struct ExpectedCounts {
  std::size_t recordings = 0;
  std::size_t speakers = 0;
};
std::optional<ExpectedCounts> expected_counts(DomainName domain, Partition partition);
/// Human-readable mismatches between a manifest and its expected counts.
std::vector<std::string> check_expected_counts(const Manifest& m);

struct ToyCorpusOptions {
  int n_speakers = 40;
  int records_per_speaker = 8;
  LanguageMix language_mix = LanguageMix::voxforge();
  double female_fraction = 0.5;
  Range duration{4.0, 6.0};
  DomainName domain = DomainName::kToy;
  int sample_rate = kDefaultSampleRate;
  std::uint64_t seed = 0;
};

inline constexpr Range kFemalePitch{165.0, 255.0};
inline constexpr Range kMalePitch{85.0, 155.0};

/// Parameters of one synthetic voice recording; serialized into the record's audio_ref.
struct ToyVoice {
  double f0 = 0.0;
  Range pitch_bounds;
  double syllable_rate = 4.0;  // Hz
  Language language = Language::kEnglish;
  double duration = 4.0;
  int sample_rate = kDefaultSampleRate;
  std::uint64_t seed = 0;

  std::string to_ref() const;
  static ToyVoice from_ref(std::string_view ref);
};

/// Center frequency of each language's spectral-envelope template.
double language_formant_hz(Language l) noexcept;

/// Deterministic pseudo-speech: harmonic-plus-noise excitation at the voice's pitch,
/// shaped by the language template and amplitude-modulated at the syllable rate.
Waveform render_toy_voice(const ToyVoice& voice);

/// Unsplit (partition "all") manifest whose audio_refs are toy synthesis specs.
Manifest synth_toy_corpus(const ToyCorpusOptions& options);

/// Renders every toy record to `<dir>/audio/<record_id>.wav` and rewrites audio_ref to the file.
void materialize_toy_audio(Manifest& m, const std::filesystem::path& dir);

/// Loads the full audio of a record at `sample_rate`.
Waveform load_record_audio(const SourceRecord& record, const std::filesystem::path& base_dir,
                           int sample_rate = kDefaultSampleRate);

/// Random crop of `length` samples (uniform start offset). Throws DataError for shorter audio.
Waveform crop(const Waveform& audio, std::size_t length, Rng& rng);

/// load_record_audio + crop.
Waveform get_clip(const SourceRecord& record, const std::filesystem::path& base_dir, std::size_t length,
                  Rng& rng, int sample_rate = kDefaultSampleRate);

}  // namespace hetsep
