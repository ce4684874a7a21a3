#include "hetsep/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hetsep/errors.hpp"
#include "hetsep/evaluation.hpp"
#include "hetsep/rng.hpp"

namespace hetsep {

using nlohmann::json;

std::string_view to_string(Objective o) noexcept { return o == Objective::kPit ? "pit" : "conditional"; }

Objective objective_from_string(std::string_view s) {
  if (s == "conditional") return Objective::kConditional;
  if (s == "pit") return Objective::kPit;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
  if (!(initial_lr > 0.0)) throw ConfigError("train: initial_lr must be positive");
  if (lr_halving_period <= 0) throw ConfigError("train: lr_halving_period must be positive");
  if (epochs <= 0) throw ConfigError("train: epochs must be positive");
  if (epoch_size == 0 && !fixed_mixtures) throw ConfigError("train: epoch_size must be positive");
  if (fixed_mixtures && *fixed_mixtures == 0) throw ConfigError("train: fixed_mixtures must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (objective == Objective::kConditional && !model.conditioned) {
    throw ConfigError("train: the conditional objective needs a conditioned model");
  }
  if (objective == Objective::kPit && model.conditioned) {
    throw ConfigError("train: the pit objective needs an unconditional model");
  }
  generation.validate();
}

double conditional_loss(std::span<const double> est_t, std::span<const double> est_o, std::span<const double> s_t,
                        std::span<const double> s_o) {
  if (est_t.size() != s_t.size() || est_o.size() != s_o.size() || est_t.size() != est_o.size() || s_t.empty()) {
    throw DataError("conditional_loss: length mismatch");
  }
  double a = 0.0;
  double b = 0.0;
  for (std::size_t i = 0; i < s_t.size(); ++i) {
    a += std::abs(est_t[i] - s_t[i]);
    b += std::abs(est_o[i] - s_o[i]);
  }
  return (a + b) / double(s_t.size());
}

namespace {

double l1_with_grad(const Waveform& est, const Waveform& ref, std::vector<double>* grad) {
  const double n = double(ref.size());
  double sum = 0.0;
  if (grad) grad->resize(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = est[i] - ref[i];
    sum += std::abs(d);
    if (grad) (*grad)[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
  }
  return sum / n;
}

void check_lengths(const SeparatorOutput& out, const Waveform& a, const Waveform& b) {
  if (out.first.size() != a.size() || out.second.size() != b.size() || a.size() != b.size() || a.empty()) {
    throw DataError("loss: length mismatch");
  }
}

}  // namespace

LossResult conditional_loss_grad(const SeparatorOutput& out, const Waveform& s_t, const Waveform& s_o) {
  check_lengths(out, s_t, s_o);
  LossResult r;
  r.value = l1_with_grad(out.first, s_t, &r.d_first) + l1_with_grad(out.second, s_o, &r.d_second);
  return r;
}

LossResult pit_loss(const SeparatorOutput& out, const Waveform& ref1, const Waveform& ref2) {
  check_lengths(out, ref1, ref2);
  const double identity = l1_with_grad(out.first, ref1, nullptr) + l1_with_grad(out.second, ref2, nullptr);
  const double swapped = l1_with_grad(out.first, ref2, nullptr) + l1_with_grad(out.second, ref1, nullptr);
  LossResult r;
  if (swapped < identity) {
    r.assignment = {1, 0};
    r.value = l1_with_grad(out.first, ref2, &r.d_first) + l1_with_grad(out.second, ref1, &r.d_second);
  } else {
    r.value = l1_with_grad(out.first, ref1, &r.d_first) + l1_with_grad(out.second, ref2, &r.d_second);
  }
  return r;
}

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ConfigError("lr_at: negative epoch");
  return config.initial_lr * std::pow(0.5, double(epoch / config.lr_halving_period));
}

template <typename S>
double clip_gradient_norm(std::span<S> grad, double max_norm) {
  double sq = 0.0;
  for (S g : grad) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const S scale = S(max_norm / norm);
    for (S& g : grad) g *= scale;
  }
  return norm;
}

template double clip_gradient_norm<float>(std::span<float>, double);
template double clip_gradient_norm<double>(std::span<double>, double);

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

template <typename S>
void Adam::step(std::span<S> params, std::span<const S> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw DataError("adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const double g = double(grad[i]);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    params[i] -= S(lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_));
  }
}

template void Adam::step<float>(std::span<float>, std::span<const float>, double);
template void Adam::step<double>(std::span<double>, std::span<const double>, double);

void Adam::restore(std::vector<double> m, std::vector<double> v, std::uint64_t steps) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ConfigError("adam: restored state has the wrong size");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

Trainer::Trainer(const ModelConfig& model, TrainConfig config, std::filesystem::path output_dir)
    : model_config_(model),
      config_(std::move(config)),
      output_dir_(std::move(output_dir)),
      model_(model, config_.seed) {
  config_.generation.resolve();
  config_.validate(model_config_);
  adam_ = Adam(model_.parameter_count(), config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
  grad_.assign(model_.parameter_count(), 0.0f);
  if (config_.fixed_mixtures) fixed_cache_.resize(*config_.fixed_mixtures);
  if (std::filesystem::exists(latest_checkpoint())) load(latest_checkpoint());
}

std::filesystem::path Trainer::latest_checkpoint() const { return output_dir_ / "checkpoints" / "latest.ckpt"; }
std::filesystem::path Trainer::metrics_path() const { return output_dir_ / "metrics.jsonl"; }

std::size_t Trainer::batches_per_epoch() const {
  const std::size_t n = config_.fixed_mixtures.value_or(config_.epoch_size);
  const auto b = std::size_t(config_.batch_size);
  return (n + b - 1) / b;
}

std::vector<std::uint64_t> Trainer::batch_indices(int epoch, std::size_t b) const {
  const std::size_t n = config_.fixed_mixtures.value_or(config_.epoch_size);
  const auto size = std::size_t(config_.batch_size);
  const std::size_t first = b * size;
  const std::size_t last = std::min(n, first + size);
  std::vector<std::uint64_t> out;
  if (config_.fixed_mixtures) {
    std::vector<std::uint64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed({config_.seed, 0xba7c4ULL, std::uint64_t(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    out.assign(order.begin() + std::ptrdiff_t(first), order.begin() + std::ptrdiff_t(last));
  } else {
    for (std::size_t i = first; i < last; ++i) out.push_back(std::uint64_t(epoch) * n + i);
  }
  return out;
}

MixtureSample Trainer::training_sample(std::uint64_t index) const {
  if (config_.fixed_mixtures) {
    auto& slot = fixed_cache_[index];
    if (!slot) slot = sample_mixture(config_.generation, Partition::kTrain, index, config_.seed);
    return *slot;
  }
  return sample_mixture(config_.generation, Partition::kTrain, index, config_.seed);
}

double Trainer::train_step(std::span<const MixtureSample> batch, double lr) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  std::fill(grad_.begin(), grad_.end(), 0.0f);
  const double weight = 1.0 / double(batch.size());
  double total = 0.0;
  for (const auto& s : batch) {
    Separator<float>::Tape tape;
    LossResult loss;
    if (config_.objective == Objective::kConditional) {
      const auto out = model_.forward(s.mixture, s.condition, &tape);
      loss = conditional_loss_grad(out, s.target, s.other);
    } else {
      const auto out = model_.forward_unconditional(s.mixture, &tape);
      loss = pit_loss(out, s.target, s.other);
    }
    if (!std::isfinite(loss.value)) {
      throw NumericError(fmt::format("non-finite loss at step {} for mixture (seed {}, split {}, index {})", step_,
                                     s.base_seed, to_string(s.split), s.index));
    }
    total += loss.value;
    for (auto& g : loss.d_first) g *= weight;
    for (auto& g : loss.d_second) g *= weight;
    model_.backward(tape, loss.d_first, loss.d_second, grad_);
  }
  const double norm = clip_gradient_norm<float>(grad_, config_.clip_norm);
  if (!std::isfinite(norm)) throw NumericError(fmt::format("non-finite gradient norm at step {}", step_));
  adam_.step<float>(model_.parameters(), grad_, lr);
  ++step_;
  return total * weight;
}

void Trainer::save(const std::filesystem::path& path) const {
  Checkpoint ckpt = make_checkpoint(model_, step_, std::uint64_t(epoch_));
  ckpt.tensors.emplace("optimizer.m", adam_.first_moment());
  ckpt.tensors.emplace("optimizer.v", adam_.second_moment());
  ckpt.metadata = json{{"adam_steps", adam_.steps()},
                       {"seed", config_.seed},
                       {"objective", to_string(config_.objective)}}
                      .dump();
  save_checkpoint(ckpt, path);
}

void Trainer::load(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  restore_parameters(model_, ckpt);
  const json meta = json::parse(ckpt.metadata);
  if (meta.value("seed", config_.seed) != config_.seed) {
    throw ConfigError("resume: checkpoint was trained with a different seed");
  }
  auto take = [&](const char* name) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw DataError(std::string("resume: checkpoint lacks ") + name);
    return it->second;
  };
  adam_.restore(take("optimizer.m"), take("optimizer.v"), meta.at("adam_steps").get<std::uint64_t>());
  step_ = ckpt.step;
  epoch_ = int(ckpt.epoch);

  // Drop log lines written after the checkpoint so a resumed log matches an uninterrupted one.
  if (std::filesystem::exists(metrics_path())) {
    std::ifstream in(metrics_path());
    std::vector<std::string> kept;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.value("epoch", 0) < epoch_) kept.push_back(line);
    }
    in.close();
    std::ofstream out(metrics_path(), std::ios::trunc);
    for (const auto& l : kept) out << l << '\n';
  }
}

std::vector<EpochSummary> Trainer::run() {
  std::filesystem::create_directories(output_dir_ / "checkpoints");
  if (validation_sets_.empty() && config_.validation_size > 0) {
    std::vector<Concept> concepts = config_.validation_concepts;
    if (concepts.empty()) {
      for (Concept v : kAllConcepts) {
        for (const auto& d : config_.generation.domains) {
          const auto it = d.condition_priors.find(v);
          if (d.prior > 0.0 && it != d.condition_priors.end() && it->second > 0.0) {
            concepts.push_back(v);
            break;
          }
        }
      }
    }
    for (Concept v : concepts) {
      validation_sets_.push_back(make_eval_set(config_.generation, v, config_.validation_size, config_.seed,
                                               Partition::kVal, config_.workers));
    }
  }

  std::vector<EpochSummary> summaries;
  std::ofstream log(metrics_path(), std::ios::app);
  if (!log) throw IoError("cannot write " + metrics_path().string());
  bool budget_left = true;
  while (epoch_ < config_.epochs && budget_left) {
    const double lr = lr_at(epoch_, config_);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < batches_per_epoch(); ++b) {
      if (config_.max_steps > 0 && step_ >= config_.max_steps) {
        budget_left = false;
        break;
      }
      const auto indices = batch_indices(epoch_, b);
      std::vector<MixtureSample> batch;
      if (config_.fixed_mixtures) {
        for (auto i : indices) batch.push_back(training_sample(i));
      } else {
        batch = sample_mixtures(config_.generation, Partition::kTrain, indices, config_.seed, std::nullopt,
                                config_.workers);
      }
      const double loss = train_step(batch, lr);
      loss_sum += loss;
      ++batches;
      if (config_.log_every > 0 && step_ % config_.log_every == 0) {
        log << json{{"kind", "step"}, {"epoch", epoch_}, {"step", step_}, {"loss", loss}, {"lr", lr}}.dump() << '\n';
        log.flush();
      }
    }
    if (batches == 0) break;
    EpochSummary summary;
    summary.epoch = epoch_;
    summary.step = step_;
    summary.loss = loss_sum / double(batches);
    summary.lr = lr;
    json validation = json::object();
    for (const auto& set : validation_sets_) {
      const EvalReport report = config_.objective == Objective::kConditional ? evaluate_conditional(model_, set)
                                                                           : evaluate_pit_oracle(model_, set);
      for (const auto& c : report.concepts) {
        if (!c.discriminative.median) continue;
        summary.validation.emplace_back(c.query, *c.discriminative.median);
        const double m = *c.discriminative.median;
        validation[std::string(concept_name(c.query))] = std::isinf(m) ? json(m > 0 ? "inf" : "-inf") : json(m);
      }
    }
    ++epoch_;
    save(output_dir_ / "checkpoints" / fmt::format("epoch_{:04d}.ckpt", epoch_ - 1));
    save(latest_checkpoint());
    log << json{{"kind", "epoch"},
                {"epoch", summary.epoch},
                {"step", summary.step},
                {"loss", summary.loss},
                {"lr", summary.lr},
                {"validation", validation}}
               .dump()
        << '\n';
    log.flush();
    if (on_epoch) on_epoch(summary);
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

}  // namespace hetsep
