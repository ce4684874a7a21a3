#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsep/conditions.hpp"
#include "hetsep/mixgen.hpp"
#include "hetsep/model.hpp"

namespace hetsep {

/// Median of the scores. Infinities are allowed; an even-count midpoint between a finite
/// value and an infinity is that infinity. Throws DataError on an empty list or a -inf/+inf midpoint.
double aggregate_median(std::span<const double> scores);

struct PoolStats {
  std::vector<double> scores;   // per-sample SI-SDR, in eval-set order
  std::size_t count = 0;
  std::size_t infinite = 0;
  std::optional<double> median;
  std::optional<double> mean;  // debug only

  void finalize();
};

struct ConceptReport {
  Concept query = Concept::kEnergyHigh;
  PoolStats discriminative;      // si_sdr(target estimate, s_T)
  PoolStats all_match;           // s_T = x: si_sdr(target estimate, x)
  PoolStats none_match;          // s_T = 0: si_sdr(other estimate, x)
  PoolStats improvement;         // discriminative SI-SDR minus si_sdr(x, s_T)
  std::size_t excluded_degenerate = 0;
};

struct EvalReport {
  std::string kind;  // "conditional" or "pit_oracle"
  std::vector<ConceptReport> concepts;
  std::string checkpoint_id;
  std::uint64_t eval_seed = 0;
  std::string config_hash;
  std::vector<std::string> notes;

  const ConceptReport* find(Concept v) const;
  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

/// Aligned text table: one row per labelled report, one column per concept (discriminative medians),
/// followed by degenerate-pool columns when any report has them.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

/// Any separation function; lets tests plug in oracle or fixed estimators.
using Estimator = std::function<SeparatorOutput(const MixtureSample&)>;

EvalReport evaluate_conditional(const Estimator& estimate, std::span<const MixtureSample> eval_set);
EvalReport evaluate_pit_oracle(const Estimator& estimate, std::span<const MixtureSample> eval_set);

/// Checks the model is conditioned with the canonical vocabulary, then scores each sample
/// with forward(x, c).
template <typename S>
EvalReport evaluate_conditional(const Separator<S>& model, std::span<const MixtureSample> eval_set);
/// Requires an unconditional model; scores the better of the two slot assignments.
template <typename S>
EvalReport evaluate_pit_oracle(const Separator<S>& model, std::span<const MixtureSample> eval_set);

/// max over slots of si_sdr(slot, target).
double pit_oracle_score(const SeparatorOutput& out, const Waveform& target);

}  // namespace hetsep
