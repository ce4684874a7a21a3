#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetsep/signal.hpp"

namespace hetsep {

/// Signal-characteristic families.
enum class Condition : std::uint8_t { kEnergy, kGender, kSpatial, kLanguage };

inline constexpr std::size_t kConditionCount = 4;

/// The concept vocabulary in its frozen canonical order. Checkpoints store this
/// order; changing it breaks every saved model.
enum class Concept : std::uint8_t {
  kEnergyHigh,
  kEnergyLow,
  kFemale,
  kMale,
  kNear,
  kFar,
  kEnglish,
  kFrench,
  kGerman,
  kSpanish,
};

inline constexpr std::size_t kVocabularySize = 10;

inline constexpr std::array<Concept, kVocabularySize> kAllConcepts{
    Concept::kEnergyHigh, Concept::kEnergyLow, Concept::kFemale, Concept::kMale,
    Concept::kNear,       Concept::kFar,       Concept::kEnglish, Concept::kFrench,
    Concept::kGerman,     Concept::kSpanish};

inline constexpr std::array<Condition, kConditionCount> kAllConditions{
    Condition::kEnergy, Condition::kGender, Condition::kSpatial, Condition::kLanguage};

constexpr std::size_t concept_index(Concept v) noexcept { return static_cast<std::size_t>(v); }
constexpr std::size_t condition_index(Condition c) noexcept { return static_cast<std::size_t>(c); }

Condition condition_of(Concept v) noexcept;
std::vector<Concept> concepts_of(Condition c);

/// Canonical names: E_HIGH, E_LOW, G_FEMALE, G_MALE, S_NEAR, S_FAR, L_EN, L_FR, L_DE, L_ES.
std::string_view concept_name(Concept v) noexcept;
Concept concept_from_name(std::string_view name);
/// ENERGY, GENDER, SPATIAL, LANGUAGE.
std::string_view condition_name(Condition c) noexcept;
Condition condition_from_name(std::string_view name);

/// Comma-joined canonical vocabulary, stored with checkpoints.
std::string vocabulary_signature();

using ConditionVector = std::array<std::uint8_t, kVocabularySize>;

ConditionVector encode_concept(Concept v) noexcept;
bool is_one_hot(const ConditionVector& c) noexcept;
/// Throws ConfigError unless `c` is one-hot.
Concept decode_concept(const ConditionVector& c);

enum class EnergyLabel { kHigh, kLow, kAmbiguous };

/// Marks the strictly loudest source E_HIGH and the rest E_LOW. When the energy
/// gap between the two loudest sources is not strictly larger than
/// `ambiguity_db`, both of them are kAmbiguous.
std::vector<EnergyLabel> assign_energy_concepts(std::span<const Waveform> sources,
                                                double ambiguity_db = 1.0);

/// Concept value of one source for every condition defined in its domain.
class ConceptProfile {
 public:
  void set(Concept v) noexcept { values_[condition_index(condition_of(v))] = v; }
  void clear(Condition c) noexcept { values_[condition_index(c)].reset(); }
  std::optional<Concept> get(Condition c) const noexcept { return values_[condition_index(c)]; }
  bool defines(Condition c) const noexcept { return values_[condition_index(c)].has_value(); }
  bool operator==(const ConceptProfile&) const = default;

 private:
  std::array<std::optional<Concept>, kConditionCount> values_{};
};

enum class Degeneracy { kNone, kAllMatch, kNoneMatch };

std::string_view degeneracy_name(Degeneracy d) noexcept;
Degeneracy degeneracy_from_name(std::string_view name);

struct TargetSubmix {
  Waveform target;
  Waveform other;
  Degeneracy degeneracy = Degeneracy::kNone;
};

/// Sums sources whose profile matches `v` into the target and the rest into the
/// other submix. Throws DataError if a profile lacks v's condition.
TargetSubmix target_submix(std::span<const Waveform> sources, std::span<const ConceptProfile> profiles,
                           Concept v);

}  // namespace hetsep
