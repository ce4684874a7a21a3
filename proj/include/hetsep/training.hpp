#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsep/checkpoint.hpp"
#include "hetsep/mixgen.hpp"
#include "hetsep/model.hpp"

namespace hetsep {

enum class Objective { kConditional, kPit };

std::string_view to_string(Objective o) noexcept;  // conditional | pit
Objective objective_from_string(std::string_view s);

struct TrainConfig {
  int batch_size = 6;
  double initial_lr = 1e-3;
  int lr_halving_period = 20;  // epochs
  int epochs = 120;
  std::size_t epoch_size = 20000;
  Objective objective = Objective::kConditional;
  GenerationConfig generation;
  std::uint64_t seed = 0;

  double clip_norm = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// When set, every epoch revisits mixtures 0..n-1 of the training stream in a fresh order.
  std::optional<std::size_t> fixed_mixtures;
  /// Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
  /// Validation mixtures per concept, drawn from the validation split (0 disables validation).
  std::size_t validation_size = 100;
  std::vector<Concept> validation_concepts;
  unsigned workers = 1;
  std::size_t log_every = 0;  // steps between step-level log lines (0 = epoch lines only)

  void validate(const ModelConfig& model) const;  // ConfigError
};

/// Value and output gradients of a two-slot loss. `assignment[i]` is the reference matched to slot i.
struct LossResult {
  double value = 0.0;
  std::vector<double> d_first;
  std::vector<double> d_second;
  std::array<int, 2> assignment{0, 1};
};

/// Mean absolute error of each slot, summed over the two slots.
double conditional_loss(std::span<const double> est_t, std::span<const double> est_o, std::span<const double> s_t,
                        std::span<const double> s_o);
LossResult conditional_loss_grad(const SeparatorOutput& out, const Waveform& s_t, const Waveform& s_o);

/// Minimum over both slot permutations of the summed per-slot mean absolute errors.
/// Ties resolve to the identity assignment.
LossResult pit_loss(const SeparatorOutput& out, const Waveform& ref1, const Waveform& ref2);

/// initial_lr * 0.5^floor(epoch / period).
double lr_at(int epoch, const TrainConfig& config);

/// Rescales `grad` so its L2 norm is at most max_norm; returns the norm before clipping.
template <typename S>
double clip_gradient_norm(std::span<S> grad, double max_norm);

/// Adaptive-moment optimizer state over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, double beta1, double beta2, double eps);

  template <typename S>
  void step(std::span<S> params, std::span<const S> grad, double lr);

  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }
  void restore(std::vector<double> m, std::vector<double> v, std::uint64_t steps);

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct EpochSummary {
  int epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::vector<std::pair<Concept, double>> validation;  // discriminative medians
};

/// Epoch loop over generated mixtures with per-epoch checkpoints and a JSON-lines metrics log.
/// Training is in single precision; checkpoints are written in double.
class Trainer {
 public:
  /// Resumes from `<output_dir>/checkpoints/latest.ckpt` when it exists.
  Trainer(const ModelConfig& model, TrainConfig config, std::filesystem::path output_dir);

  /// Runs the remaining epochs (or until max_steps). Throws NumericError on a non-finite loss.
  std::vector<EpochSummary> run();
  /// One optimizer step over an explicit batch; returns the mean loss.
  double train_step(std::span<const MixtureSample> batch, double lr);

  const Separator<float>& model() const noexcept { return model_; }
  Separator<float>& model() noexcept { return model_; }
  std::uint64_t step() const noexcept { return step_; }
  int epoch() const noexcept { return epoch_; }
  std::filesystem::path latest_checkpoint() const;
  std::filesystem::path metrics_path() const;

  /// Training indices of batch `b` in `epoch`; a pure function of the seed.
  std::vector<std::uint64_t> batch_indices(int epoch, std::size_t b) const;
  std::size_t batches_per_epoch() const;

  /// Called after each epoch; useful for progress reporting.
  std::function<void(const EpochSummary&)> on_epoch;

 private:
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);
  MixtureSample training_sample(std::uint64_t index) const;

  ModelConfig model_config_;
  TrainConfig config_;
  std::filesystem::path output_dir_;
  Separator<float> model_;
  Adam adam_;
  std::uint64_t step_ = 0;
  int epoch_ = 0;
  std::vector<float> grad_;
  std::vector<std::vector<MixtureSample>> validation_sets_;
  mutable std::vector<std::optional<MixtureSample>> fixed_cache_;
};

}  // namespace hetsep
