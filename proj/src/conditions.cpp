#include "hetsep/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetsep/errors.hpp"

namespace hetsep {
namespace {

constexpr std::array<std::string_view, kVocabularySize> kConceptNames{
    "E_HIGH", "E_LOW", "G_FEMALE", "G_MALE", "S_NEAR", "S_FAR", "L_EN", "L_FR", "L_DE", "L_ES"};

constexpr std::array<std::string_view, kConditionCount> kConditionNames{"ENERGY", "GENDER", "SPATIAL",
                                                                        "LANGUAGE"};

}  // namespace

Condition condition_of(Concept v) noexcept {
  switch (v) {
    case Concept::kEnergyHigh:
    case Concept::kEnergyLow:
      return Condition::kEnergy;
    case Concept::kFemale:
    case Concept::kMale:
      return Condition::kGender;
    case Concept::kNear:
    case Concept::kFar:
      return Condition::kSpatial;
    default:
      return Condition::kLanguage;
  }
}

std::vector<Concept> concepts_of(Condition c) {
  std::vector<Concept> out;
  for (Concept v : kAllConcepts) {
    if (condition_of(v) == c) out.push_back(v);
  }
  return out;
}

std::string_view concept_name(Concept v) noexcept { return kConceptNames[concept_index(v)]; }

Concept concept_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kVocabularySize; ++i) {
    if (kConceptNames[i] == name) return kAllConcepts[i];
  }
  throw ConfigError("unknown concept '" + std::string(name) + "'");
}

std::string_view condition_name(Condition c) noexcept { return kConditionNames[condition_index(c)]; }

Condition condition_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kConditionCount; ++i) {
    if (kConditionNames[i] == name) return kAllConditions[i];
  }
  throw ConfigError("unknown condition '" + std::string(name) + "'");
}

std::string vocabulary_signature() {
  std::string out;
  for (std::size_t i = 0; i < kVocabularySize; ++i) {
    if (i) out += ',';
    out += kConceptNames[i];
  }
  return out;
}

ConditionVector encode_concept(Concept v) noexcept {
  ConditionVector c{};
  c[concept_index(v)] = 1;
  return c;
}

bool is_one_hot(const ConditionVector& c) noexcept {
  int ones = 0;
  for (auto bit : c) {
    if (bit > 1) return false;
    ones += bit;
  }
  return ones == 1;
}

Concept decode_concept(const ConditionVector& c) {
  if (!is_one_hot(c)) throw ConfigError("condition vector is not one-hot");
  const auto it = std::find(c.begin(), c.end(), std::uint8_t{1});
  return kAllConcepts[std::size_t(it - c.begin())];
}

std::vector<EnergyLabel> assign_energy_concepts(std::span<const Waveform> sources, double ambiguity_db) {
  if (sources.size() < 2) throw DataError("assign_energy_concepts: need at least two sources");
  std::vector<double> energies;
  for (const auto& s : sources) energies.push_back(energy(s));
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return energies[a] > energies[b]; });
  std::vector<EnergyLabel> labels(sources.size(), EnergyLabel::kLow);
  const double top = energies[order[0]];
  const double second = energies[order[1]];
  const double gap = second > 0.0 ? 10.0 * std::log10(top / second) : HUGE_VAL;
  if (top > 0.0 && gap > ambiguity_db) {
    labels[order[0]] = EnergyLabel::kHigh;
  } else {
    labels[order[0]] = EnergyLabel::kAmbiguous;
    labels[order[1]] = EnergyLabel::kAmbiguous;
  }
  return labels;
}

std::string_view degeneracy_name(Degeneracy d) noexcept {
  switch (d) {
    case Degeneracy::kAllMatch:
      return "all_match";
    case Degeneracy::kNoneMatch:
      return "none_match";
    default:
      return "none";
  }
}

Degeneracy degeneracy_from_name(std::string_view name) {
  if (name == "none") return Degeneracy::kNone;
  if (name == "all_match") return Degeneracy::kAllMatch;
  if (name == "none_match") return Degeneracy::kNoneMatch;
  throw ConfigError("unknown degeneracy '" + std::string(name) + "'");
}

TargetSubmix target_submix(std::span<const Waveform> sources, std::span<const ConceptProfile> profiles,
                           Concept v) {
  if (sources.empty()) throw DataError("target_submix: no sources");
  if (sources.size() != profiles.size()) throw DataError("target_submix: one profile per source required");
  const Condition kind = condition_of(v);
  TargetSubmix out{Waveform(sources[0].size(), sources[0].sample_rate),
                   Waveform(sources[0].size(), sources[0].sample_rate), Degeneracy::kNone};
  std::size_t matches = 0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    require_compatible(sources[j], sources[0]);
    const auto value = profiles[j].get(kind);
    if (!value) {
      throw DataError("target_submix: condition " + std::string(condition_name(kind)) +
                      " is undefined for source " + std::to_string(j));
    }
    Waveform& dst = *value == v ? out.target : out.other;
    matches += *value == v ? 1 : 0;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += sources[j][i];
  }
  if (matches == sources.size()) out.degeneracy = Degeneracy::kAllMatch;
  if (matches == 0) out.degeneracy = Degeneracy::kNoneMatch;
  return out;
}

}  // namespace hetsep
