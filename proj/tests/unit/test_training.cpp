#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hetsep/checkpoint.hpp"
#include "hetsep/errors.hpp"
#include "hetsep/training.hpp"
#include "oracles.hpp"

using namespace hetsep;
namespace fs = std::filesystem;

namespace {

Waveform wave(std::mt19937_64& gen, std::size_t n) { return Waveform(oracle::random_signal(gen, n), 8000); }

ModelConfig micro() {
  ModelConfig c;
  c.num_blocks = 2;
  c.channels = 8;
  c.encoder_bases = 8;
  c.expansion_channels = 16;
  c.block_depth = 2;
  return c;
}

TrainConfig small_run() {
  ToyCorpusOptions o;
  o.n_speakers = 20;
  o.records_per_speaker = 2;
  DomainEntry d;
  d.spec = domain_preset(DomainName::kToy);
  d.condition_priors = {{Concept::kEnergyHigh, 0.5}, {Concept::kMale, 0.5}};
  d.corpus = std::make_shared<const CorpusSplit>(split_speakers_by_gender(synth_toy_corpus(o), {8, 1, 1}, 0));
  TrainConfig t;
  t.generation.domains = {d};
  t.generation.clip_samples = 1600;
  t.batch_size = 2;
  t.epoch_size = 4;
  t.epochs = 3;
  t.lr_halving_period = 2;
  t.validation_size = 2;
  t.log_every = 1;
  t.seed = 5;
  return t;
}

fs::path fresh(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("hetsep_train_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Loss, ConditionalMatchesOracle) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 20; ++i) {
    const auto a = wave(gen, 64), b = wave(gen, 64), s = wave(gen, 64), o = wave(gen, 64);
    EXPECT_NEAR(conditional_loss(a.view(), b.view(), s.view(), o.view()),
                oracle::mean_abs(a.view(), s.view()) + oracle::mean_abs(b.view(), o.view()), 1e-12);
  }
  EXPECT_THROW(conditional_loss(std::vector<double>(3), std::vector<double>(3), std::vector<double>(4),
                                std::vector<double>(3)),
               DataError);
}

TEST(Loss, PitMatchesPermutationEnumeration) {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 200; ++i) {
    const SeparatorOutput out{wave(gen, 50), wave(gen, 50)};
    const auto r1 = wave(gen, 50), r2 = wave(gen, 50);
    const auto r = pit_loss(out, r1, r2);
    EXPECT_NEAR(r.value, oracle::pit_min({out.first.samples, out.second.samples}, {r1.samples, r2.samples}), 1e-12);
  }
}

TEST(Loss, PitTieKeepsIdentity) {
  const Waveform r({1, 2, 3}, 8000);
  const auto result = pit_loss({r, r}, r, r);
  EXPECT_EQ(result.assignment, (std::array<int, 2>{0, 1}));
  EXPECT_EQ(result.value, 0.0);
}

TEST(Loss, PitFindsSwap) {
  const Waveform a({1, 0}, 8000), b({0, 1}, 8000);
  const auto r = pit_loss({b, a}, a, b);
  EXPECT_EQ(r.assignment, (std::array<int, 2>{1, 0}));
  EXPECT_EQ(r.value, 0.0);
}

TEST(Schedule, HalvesEveryPeriod) {
  TrainConfig t;
  t.initial_lr = 1e-3;
  t.lr_halving_period = 20;
  EXPECT_DOUBLE_EQ(lr_at(0, t), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(19, t), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(20, t), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(119, t), 1e-3 / 32);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
  std::vector<double> g{3, 4};
  EXPECT_DOUBLE_EQ(clip_gradient_norm<double>(g, 10.0), 5.0);
  EXPECT_EQ(g, (std::vector<double>{3, 4}));
  EXPECT_DOUBLE_EQ(clip_gradient_norm<double>(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-12);
  EXPECT_NEAR(g[1], 0.8, 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam(3, 0.9, 0.999, 1e-8);
  std::vector<double> p{1, 1, 1};
  const std::vector<double> g{0.5, -2.0, 0.0};
  adam.step<double>(p, g, 0.01);
  EXPECT_NEAR(p[0], 0.99, 1e-8);
  EXPECT_NEAR(p[1], 1.01, 1e-8);
  EXPECT_DOUBLE_EQ(p[2], 1.0);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MatchesHandRolledRecurrence) {
  Adam adam(1, 0.9, 0.999, 1e-8);
  std::vector<double> p{0.0};
  double m = 0, v = 0, q = 0;
  for (int t = 1; t <= 5; ++t) {
    const double g = std::sin(t);
    adam.step<double>(p, std::vector<double>{g}, 0.1);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    q -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0], q, 1e-12);
  }
}

TEST(Config, ObjectiveMustMatchModelKind) {
  auto t = small_run();
  auto m = micro();
  m.conditioned = false;
  EXPECT_THROW(t.validate(m), ConfigError);
  t.objective = Objective::kPit;
  EXPECT_NO_THROW(t.validate(m));
  EXPECT_THROW(t.validate(micro()), ConfigError);
  t.batch_size = 0;
  EXPECT_THROW(t.validate(m), ConfigError);
}

TEST(Trainer, BatchIndicesArePureAndCoverEpoch) {
  const auto t = small_run();
  Trainer a(micro(), t, fresh("idx_a"));
  Trainer b(micro(), t, fresh("idx_b"));
  EXPECT_EQ(a.batches_per_epoch(), 2u);
  EXPECT_EQ(a.batch_indices(1, 1), b.batch_indices(1, 1));
  std::vector<std::uint64_t> all;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto idx = a.batch_indices(1, i);
    all.insert(all.end(), idx.begin(), idx.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<std::uint64_t>{4, 5, 6, 7}));
}

TEST(Trainer, LossDecreasesOnAFixedBatch) {
  auto t = small_run();
  t.initial_lr = 3e-3;
  Trainer trainer(micro(), t, fresh("fit"));
  const std::vector<MixtureSample> batch{sample_mixture(t.generation, Partition::kTrain, 0, 1),
                                         sample_mixture(t.generation, Partition::kTrain, 1, 1)};
  const double first = trainer.train_step(batch, 3e-3);
  double last = first;
  for (int i = 0; i < 40; ++i) last = trainer.train_step(batch, 3e-3);
  EXPECT_LT(last, first);
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
  const auto t = small_run();
  const auto straight = fresh("straight");
  Trainer(micro(), t, straight).run();

  const auto resumed = fresh("resumed");
  {
    Trainer first(micro(), t, resumed);
    first.on_epoch = [](const EpochSummary& s) {
      if (s.epoch == 1) throw std::runtime_error("simulated interruption");
    };
    EXPECT_THROW(first.run(), std::runtime_error);
  }
  // a crash mid-epoch can leave step lines past the last checkpoint
  std::ofstream(resumed / "metrics.jsonl", std::ios::app) << R"({"kind":"step","epoch":2,"step":5,"loss":1.0,"lr":0.1})"
                                                           << "\n";
  Trainer second(micro(), t, resumed);
  EXPECT_EQ(second.epoch(), 2);
  second.run();

  EXPECT_EQ(slurp(straight / "metrics.jsonl"), slurp(resumed / "metrics.jsonl"));
  const auto a = load_checkpoint(straight / "checkpoints" / "latest.ckpt");
  const auto b = load_checkpoint(resumed / "checkpoints" / "latest.ckpt");
  EXPECT_EQ(a.tensors, b.tensors);
  EXPECT_EQ(a.step, 6u);
  EXPECT_EQ(a.epoch, 3u);
  EXPECT_TRUE(fs::exists(straight / "checkpoints" / "epoch_0002.ckpt"));
}

TEST(Trainer, MaxStepsStopsEarly) {
  auto t = small_run();
  t.max_steps = 3;
  t.validation_size = 0;
  Trainer trainer(micro(), t, fresh("budget"));
  trainer.run();
  EXPECT_EQ(trainer.step(), 3u);
}

TEST(Trainer, FixedMixturesRevisitTheSameSet) {
  auto t = small_run();
  t.fixed_mixtures = 4;
  t.validation_size = 0;
  Trainer trainer(micro(), t, fresh("fixed"));
  for (int e = 0; e < 3; ++e) {
    std::vector<std::uint64_t> all;
    for (std::size_t b = 0; b < trainer.batches_per_epoch(); ++b) {
      const auto idx = trainer.batch_indices(e, b);
      all.insert(all.end(), idx.begin(), idx.end());
    }
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, (std::vector<std::uint64_t>{0, 1, 2, 3}));
  }
}
