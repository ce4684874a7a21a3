#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetsep/evaluation.hpp"
#include "hetsep/model.hpp"
#include "hetsep/training.hpp"

namespace hetsep {

inline constexpr int kExperimentSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "HETSEP_OUTPUT_ROOT";

struct EvalSpec {
  std::vector<Concept> concepts;  // empty: every concept with positive training prior
  std::size_t size = 100;
  std::uint64_t seed = 1;
  Partition split = Partition::kTest;
  /// Degenerate ratios used when building eval sets (defaults to the training ratios).
  std::optional<std::array<double, kConditionCount>> degenerate_ratio;
};

struct SweepSpec {
  std::string path;  // JSON pointer into the experiment document, e.g. /generation/degenerate_ratio/GENDER
  std::vector<nlohmann::json> values;
};

struct ExperimentConfig {
  std::string name;
  ModelConfig model;
  TrainConfig train;
  EvalSpec eval;
  std::optional<SweepSpec> sweep;
  std::filesystem::path output_dir;
  nlohmann::json document;  // the parsed source, used for hashing and sweep mutation
  std::filesystem::path base_dir;

  /// Hex content hash of the canonical document.
  std::string hash() const;
  /// Concepts to evaluate: eval.concepts, or every concept with positive training prior.
  std::vector<Concept> eval_concepts() const;
  /// Generation settings for eval sets (training settings with the eval degenerate ratios).
  GenerationConfig eval_generation() const;
};

/// Builds a config from a JSON document. Relative paths resolve against `base_dir`;
/// output_dir additionally resolves under $HETSEP_OUTPUT_ROOT when set. Throws ConfigError.
ExperimentConfig parse_experiment(const nlohmann::json& document, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Copy of `document` with the value at JSON pointer `path` replaced; the parent must exist.
nlohmann::json apply_override(nlohmann::json document, const std::string& path, const nlohmann::json& value);

/// Trains to completion (resuming when a checkpoint exists) and returns the epoch summaries.
std::vector<EpochSummary> run_training(const ExperimentConfig& config);

/// Fixed eval set for `v` as configured by the experiment.
std::vector<MixtureSample> build_eval_set(const ExperimentConfig& config, Concept v);

/// Evaluates a checkpoint on the configured eval sets (conditional or oracle-assignment by model kind).
EvalReport run_evaluation(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                          const std::vector<Concept>& concepts = {});

struct SweepPoint {
  nlohmann::json value;
  std::optional<EvalReport> report;
  std::string error;  // non-empty when the point failed
};

/// One train + eval per grid value; failures are recorded and the sweep continues.
/// Writes <output>/summary.csv and <output>/plot_<pool>.svg.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& config);

inline constexpr std::array<const char*, 3> kPoolNames{"discriminative", "all_match", "none_match"};

/// CSV with columns value,concept,pool,median,count,infinite,status (|grid| x |concepts| x 3 rows).
std::string sweep_csv(const std::vector<SweepPoint>& points, const std::vector<Concept>& concepts,
                      const std::string& config_hash);

struct SweepRow {
  std::string value;
  std::string query;
  std::string pool;
  std::optional<double> median;
};
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

/// Line plot of median SI-SDR against grid position, one line per concept, for the given pools.
std::string render_sweep_svg(const std::vector<SweepRow>& rows, const std::vector<std::string>& pools,
                             const std::string& title);

/// Writes plot_discriminative.svg and plot_degenerate.svg next to a summary CSV.
void render_plots(const std::filesystem::path& csv_path, const std::filesystem::path& out_dir);

/// The toy corpus split used by configs that synthesize their data.
std::shared_ptr<const CorpusSplit> toy_corpus_split(const ToyCorpusOptions& options, std::uint64_t split_seed);

}  // namespace hetsep
