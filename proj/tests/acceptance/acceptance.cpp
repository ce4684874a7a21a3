// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed below.
//
//   acceptance [--only N] [--work DIR]
//
// Criteria 8-10 train models and take minutes; the rest finish in seconds.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "hetsep/checkpoint.hpp"
#include "hetsep/evaluation.hpp"
#include "hetsep/experiment.hpp"
#include "hetsep/mixgen.hpp"
#include "hetsep/model.hpp"
#include "hetsep/rng.hpp"
#include "hetsep/training.hpp"
#include "oracles.hpp"

using namespace hetsep;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kSiSdrTolDb = 1e-9;
constexpr double kConsistencyTol = 1e-5;
constexpr std::size_t kFilmAtDefaults = 163840;
constexpr double kGradRelTol = 1e-3;
constexpr double kSigmas = 3.0;
constexpr double kT60RelTol = 0.30;
constexpr double kDelayTolSamples = 1.0;
constexpr double kLearnDb = 5.0;
constexpr double kDiscriminationDb = 3.0;
constexpr double kDegenerateGapDb = 5.0;

constexpr double kBudget1 = 5;
constexpr double kBudget2 = 60;
constexpr double kBudget4 = 120;
constexpr double kBudget5 = 300;
constexpr double kBudget6 = 60;
constexpr double kBudget7 = 120;
constexpr double kBudget8 = 900;
constexpr double kBudget10 = 3600;

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;
std::string g_self;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Waveform gaussian(std::mt19937_64& gen, std::size_t n, double scale = 1.0) {
  return Waveform(oracle::random_signal(gen, n, scale), kDefaultSampleRate);
}

// 1: SI-SDR against the projection oracle, and scale invariance.
Outcome si_sdr_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> len(16, 4000);
  std::uniform_real_distribution<double> mix(-1.0, 3.0), scale(-40.0, 40.0);
  double worst = 0, worst_scale = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = len(gen);
    const auto ref = gaussian(gen, n);
    const auto est = mix(gen) * ref + gaussian(gen, n, std::exp(mix(gen)));
    worst = std::max(worst, std::fabs(si_sdr(est, ref) - oracle::si_sdr(est.view(), ref.view())));
    const double a = std::pow(10.0, scale(gen) / 20) * (i % 2 ? -1 : 1);
    worst_scale = std::max(worst_scale, std::fabs(si_sdr(a * est, ref) - si_sdr(est, ref)));
  }
  const double t = seconds_since(t0);
  return {worst <= kSiSdrTolDb && worst_scale <= kSiSdrTolDb && t < kBudget1,
          fmt::format("max |lib - oracle| {:.2e} dB, max scale drift {:.2e} dB (tol {:.0e}), {:.2f} s (< {} s)", worst,
                      worst_scale, kSiSdrTolDb, t, kBudget1)};
}

// 2: forward outputs sum to the input.
Outcome mixture_consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<std::size_t> len(100, 16000);
  std::uniform_int_distribution<std::size_t> pick(0, kVocabularySize - 1);
  std::uniform_real_distribution<double> level(-3.0, 1.0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    Separator<float> m(ModelConfig::tiny(), std::uint64_t(i));
    Rng rng(derive_seed({2, std::uint64_t(i)}));
    for (auto& p : m.parameters()) p += float(0.05 * rng.normal());
    const auto x = gaussian(gen, len(gen), std::pow(10.0, level(gen)));
    const auto out = m.forward(x, kAllConcepts[pick(gen)]);
    double err = 0, ref = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      err += std::pow(out.first[k] + out.second[k] - x[k], 2);
      ref += x[k] * x[k];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  const double t = seconds_since(t0);
  return {worst <= kConsistencyTol && t < kBudget2,
          fmt::format("max |s_T + s_O - x| / |x| = {:.2e} over 100 draws (tol {:.0e}), {:.1f} s (< {} s)", worst,
                      kConsistencyTol, t, kBudget2)};
}

// 3: FiLM parameter accounting and identity initialization.
Outcome film_accounting() {
  ModelConfig c;
  auto u = c;
  u.conditioned = false;
  const std::size_t cond = count_parameters(c);
  const std::size_t uncond = count_parameters(u);
  const std::size_t diff = cond - uncond;
  const std::size_t formula = 2 * std::size_t(c.num_blocks) * kVocabularySize * std::size_t(c.channels);

  bool identical = true;
  std::mt19937_64 gen(3);
  for (const auto& config : {ModelConfig::tiny(), ModelConfig{}}) {
    Separator<float> m(config, 11);
    const auto x = gaussian(gen, config == ModelConfig{} ? 2000 : 8000);
    const auto free = m.forward_unconditional(x);
    for (Concept v : kAllConcepts) {
      const auto out = m.forward(x, v);
      identical = identical && out.first == free.first && out.second == free.second;
    }
  }
  return {diff == formula && diff == kFilmAtDefaults && identical,
          fmt::format("conditioned {} - unconditional {} = {} (2 B |V| C = {}, expected {}); identity FiLM bit-equal: {}",
                      cond, uncond, diff, formula, kFilmAtDefaults, identical ? "yes" : "no")};
}

// 4: analytic gradient of conditional_loss after forward vs central differences, every parameter.
Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig c;
  c.num_blocks = 2;
  c.channels = 8;
  c.encoder_bases = 8;
  c.expansion_channels = 16;
  Separator<double> m(c, 3);
  Rng rng(5);
  // move FiLM, norms and biases off their initial values so every path carries gradient
  for (auto& p : m.parameters()) p += 0.1 * rng.normal();
  constexpr std::size_t kT = 400;
  Waveform s_t(kT), s_o(kT);
  for (std::size_t i = 0; i < kT; ++i) {
    s_t[i] = rng.normal();
    s_o[i] = 0.5 * rng.normal();
  }
  const auto x = s_t + s_o;
  const Concept v = Concept::kMale;
  auto loss = [&] {
    const auto o = m.forward(x, v);
    return conditional_loss(o.first.view(), o.second.view(), s_t.view(), s_o.view());
  };
  Separator<double>::Tape tape;
  const auto lr = conditional_loss_grad(m.forward(x, v, &tape), s_t, s_o);
  std::vector<double> grad(m.parameter_count(), 0.0);
  m.backward(tape, lr.d_first, lr.d_second, grad);

  const double h = 1e-5;
  std::size_t bad = 0, kinks = 0;
  double worst = 0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double& p = m.parameters()[i];
    const double p0 = p;
    p = p0 + h;
    const double lp = loss();
    p = p0 - h;
    const double lm = loss();
    p = p0;
    const double l0 = loss();
    const double fd = (lp - lm) / (2 * h);
    const double rel = std::fabs(fd - grad[i]) / std::max(1e-6, std::fabs(fd) + std::fabs(grad[i]));
    // |.| has kinks; when the two one-sided slopes disagree by more than the error, the
    // stencil straddles one and the central difference is not a valid reference.
    if (rel > kGradRelTol && std::fabs((lp - l0) / h - (l0 - lm) / h) > std::fabs(fd - grad[i])) {
      ++kinks;
      continue;
    }
    worst = std::max(worst, rel);
    bad += rel > kGradRelTol;
  }
  const double t = seconds_since(t0);
  const bool few_kinks = kinks * 100 <= grad.size();
  return {bad == 0 && few_kinks && t < kBudget4,
          fmt::format("{} parameters, {} above rel {:.0e}, {} straddle a kink (<= 1% allowed), worst rel {:.2e}, "
                      "{:.1f} s (< {} s)",
                      grad.size(), bad, kGradRelTol, kinks, worst, t, kBudget4)};
}

std::shared_ptr<const CorpusSplit> toy_split(DomainName domain, std::uint64_t seed) {
  ToyCorpusOptions o;
  o.n_speakers = 40;
  o.records_per_speaker = 4;
  o.domain = domain;
  o.seed = seed;
  return toy_corpus_split(o, seed);
}

GenerationConfig determinism_config() {
  GenerationConfig g;
  DomainEntry d;
  d.spec = domain_preset(DomainName::kToy);
  d.condition_priors = {{Concept::kEnergyHigh, 0.2}, {Concept::kEnergyLow, 0.2}, {Concept::kFemale, 0.2},
                        {Concept::kMale, 0.2}, {Concept::kEnglish, 0.2}};
  d.corpus = toy_split(DomainName::kToy, 0);
  g.domains = {d};
  g.degenerate_ratio[condition_index(Condition::kGender)] = 0.2;
  g.resolve();
  g.validate();
  return g;
}

std::uint64_t eval_set_hash(unsigned workers) {
  const auto set = make_eval_set(determinism_config(), Concept::kFemale, 100, 17, Partition::kTest, workers);
  ContentHash h;
  for (const auto& s : set) h.add(s.fingerprint());
  return h.value();
}

std::uint64_t hash_in_child() {
  const fs::path out = g_work / fmt::format("c5_hash_{}.txt", ::getpid());
  const std::string cmd = fmt::format("\"{}\" --eval-hash > \"{}\"", g_self, out.string());
  if (std::system(cmd.c_str()) != 0) return 0;
  std::FILE* f = std::fopen(out.c_str(), "r");
  unsigned long long v = 0;
  if (!f || std::fscanf(f, "%llx", &v) != 1) v = 0;
  if (f) std::fclose(f);
  return v;
}

// 5: determinism across processes and workers, prior frequencies, SNR range, SLIB pairing.
Outcome generation_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(g_work);
  const std::uint64_t here = eval_set_hash(1);
  const std::uint64_t four = eval_set_hash(4);
  const std::uint64_t child_a = hash_in_child();
  const std::uint64_t child_b = hash_in_child();
  const bool deterministic = here == four && here == child_a && here == child_b;

  // Priors: WSJ 0.6 / SLIB 0.4, with uneven query priors inside each domain.
  GenerationConfig g;
  DomainEntry wsj, slib;
  wsj.spec = domain_preset(DomainName::kWsj);
  wsj.prior = 0.6;
  wsj.condition_priors = {{Concept::kEnergyHigh, 0.1}, {Concept::kEnergyLow, 0.2}, {Concept::kFemale, 0.3},
                          {Concept::kMale, 0.4}};
  wsj.corpus = toy_split(DomainName::kWsj, 1);
  slib.spec = domain_preset(DomainName::kSlib);
  slib.prior = 0.4;
  slib.condition_priors = {{Concept::kMale, 0.5}, {Concept::kNear, 0.25}, {Concept::kFar, 0.25}};
  slib.corpus = toy_split(DomainName::kSlib, 2);
  g.domains = {wsj, slib};
  g.max_order = 10;
  g.resolve();
  g.validate();

  constexpr std::size_t kN = 10000;
  std::map<std::pair<std::size_t, Concept>, std::size_t> joint;
  std::vector<std::size_t> per_domain(2, 0);
  for (std::uint64_t i = 0; i < kN; ++i) {
    const auto plan = plan_mixture(g, Partition::kTrain, i, 5);
    ++per_domain[plan.domain];
    ++joint[{plan.domain, plan.query}];
  }
  double worst_sigma = 0;
  auto check = [&](double count, double p) {
    const double sd = std::sqrt(kN * p * (1 - p));
    worst_sigma = std::max(worst_sigma, std::fabs(count - kN * p) / sd);
  };
  for (std::size_t d = 0; d < 2; ++d) {
    check(double(per_domain[d]), g.domains[d].prior);
    for (const auto& [v, p] : g.domains[d].condition_priors) check(double(joint[{d, v}]), g.domains[d].prior * p);
  }

  // The plan is the first draw of sample_mixture, so full mixtures carry the same categorical outcomes.
  bool plan_agrees = true;
  double snr_lo = HUGE_VAL, snr_hi = -HUGE_VAL;
  std::size_t wsj_count = 0, slib_count = 0, near_far = 0;
  for (std::uint64_t i = 0; i < 160; ++i) {
    const auto plan = plan_mixture(g, Partition::kTrain, i, 5);
    const auto s = sample_mixture(g, Partition::kTrain, i, 5);
    plan_agrees = plan_agrees && s.query == plan.query && s.domain == g.domains[plan.domain].spec.name;
    if (s.domain == DomainName::kWsj) {
      ++wsj_count;
      snr_lo = std::min(snr_lo, s.snr_db);
      snr_hi = std::max(snr_hi, s.snr_db);
    } else if (condition_of(s.query) != Condition::kSpatial) {
      ++slib_count;
      const bool a = s.sources[0].placement->field == FieldClass::kNear;
      const bool b = s.sources[1].placement->field == FieldClass::kNear;
      near_far += a != b;
    }
  }
  const bool snr_ok = wsj_count > 0 && snr_lo >= 0.0 && snr_hi <= 5.0;
  const bool pairing_ok = slib_count > 0 && near_far == slib_count;
  const double t = seconds_since(t0);
  return {deterministic && worst_sigma <= kSigmas && plan_agrees && snr_ok && pairing_ok && t < kBudget5,
          fmt::format("eval-set hash {:016x} same in 2 child processes and 1 vs 4 workers: {}; worst prior deviation "
                      "{:.2f} sigma over {} draws (<= {}); plans match mixtures: {}; WSJ SNR range [{:.2f}, {:.2f}] "
                      "over {} mixtures (within [0, 5]); SLIB near+far {}/{}; {:.0f} s (< {} s)",
                      here, deterministic ? "yes" : "no", worst_sigma, kN, kSigmas, plan_agrees ? "yes" : "no", snr_lo,
                      snr_hi, wsj_count, near_far, slib_count, t, kBudget5)};
}

// 6: PIT against enumeration, and the oracle assignment never loses to a fixed one.
Outcome pit_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<std::size_t> len(8, 2000);
  double worst = 0;
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = len(gen);
    const SeparatorOutput out{gaussian(gen, n), gaussian(gen, n)};
    const auto r1 = gaussian(gen, n), r2 = gaussian(gen, n);
    const auto r = pit_loss(out, r1, r2);
    worst = std::max(worst, std::fabs(r.value - oracle::pit_min({out.first.samples, out.second.samples},
                                                                {r1.samples, r2.samples})));
    const double best = pit_oracle_score(out, r1);
    violations += best < si_sdr(out.first, r1) || best < si_sdr(out.second, r1);
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && violations == 0 && t < kBudget6,
          fmt::format("max |pit_loss - enumeration| {:.1e} on 1000 pairs, oracle below a fixed assignment {} times, "
                      "{:.1f} s (< {} s)",
                      worst, violations, t, kBudget6)};
}

// First arrival: the earliest tap reaching 30% of the peak, then the local maximum right after it.
std::size_t first_arrival(const std::vector<double>& taps) {
  double peak = 0;
  for (double v : taps) peak = std::max(peak, std::fabs(v));
  std::size_t i = 0;
  while (i < taps.size() && std::fabs(taps[i]) < 0.3 * peak) ++i;
  while (i + 1 < taps.size() && std::fabs(taps[i + 1]) > std::fabs(taps[i])) ++i;
  return i;
}

// 7: Schroeder T60 and direct-path delay of generated RIRs.
Outcome rir_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7);
  double worst_t60 = 0, worst_delay = 0;
  for (int i = 0; i < 20; ++i) {
    const RoomRanges ranges = i % 2 ? slib_room_ranges() : svox_room_ranges();
    const RoomSpec room = sample_room(ranges, rng);
    const auto placement = place_source(room, i % 4 < 2 ? FieldClass::kNear : FieldClass::kFar, ranges, rng);
    const Rir rir = image_source_rir(room, placement.position);
    const double expected = distance(room.mic, placement.position) / kSpeedOfSound * kDefaultSampleRate;
    const double t60 = oracle::schroeder_t60(rir.taps, kDefaultSampleRate, std::size_t(expected));
    worst_t60 = std::max(worst_t60, std::fabs(t60 / room.rt60 - 1.0));
    worst_delay = std::max(worst_delay, std::fabs(double(first_arrival(rir.taps)) - expected));
  }
  const double t = seconds_since(t0);
  return {worst_t60 <= kT60RelTol && worst_delay <= kDelayTolSamples && t < kBudget7,
          fmt::format("20 rooms: worst T60 error {:.1f}% (<= {:.0f}%), worst direct-path offset {:.2f} samples "
                      "(<= {}), {:.1f} s (< {} s)",
                      100 * worst_t60, 100 * kT60RelTol, worst_delay, kDelayTolSamples, t, kBudget7)};
}

// Criterion-8 recipe: tiny conditioned model on 64 fixed energy-conditioned toy mixtures.
constexpr std::size_t kFixedMixtures = 64;
constexpr std::size_t kSteps = 1500;

TrainConfig energy_recipe() {
  DomainEntry d;
  d.spec = domain_preset(DomainName::kToy);
  d.condition_priors = {{Concept::kEnergyHigh, 0.5}, {Concept::kEnergyLow, 0.5}};
  d.corpus = toy_corpus_split(ToyCorpusOptions{}, 0);
  TrainConfig t;
  t.generation.domains = {d};
  t.batch_size = 4;
  t.initial_lr = 3e-3;
  t.lr_halving_period = 1000000;
  t.epochs = 1000000;
  t.fixed_mixtures = kFixedMixtures;
  t.max_steps = kSteps;
  t.validation_size = 0;
  t.seed = 7;
  return t;
}

fs::path recipe_dir() { return g_work / fmt::format("energy_tiny_{}steps", kSteps); }

// Trains the recipe (resuming if a finished run is on disk) and returns the model.
Separator<float> train_energy_model(double* seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(ModelConfig::tiny(), energy_recipe(), recipe_dir());
  trainer.run();
  if (seconds) *seconds = seconds_since(t0);
  return trainer.model();
}

std::vector<double> pooled_improvement(const EvalReport& r) {
  std::vector<double> all;
  for (const auto& c : r.concepts) all.insert(all.end(), c.improvement.scores.begin(), c.improvement.scores.end());
  return all;
}

// 8: desk-scale learning on the training mixtures themselves.
Outcome desk_scale_learning() {
  fs::remove_all(recipe_dir());
  double train_s = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = train_energy_model(&train_s);
  const auto recipe = energy_recipe();
  std::vector<MixtureSample> set;
  for (std::uint64_t i = 0; i < kFixedMixtures; ++i) {
    set.push_back(sample_mixture(recipe.generation, Partition::kTrain, i, recipe.seed));
  }
  const auto report = evaluate_conditional(model, set);
  const double median = aggregate_median(pooled_improvement(report));
  const double t = seconds_since(t0);
  return {median >= kLearnDb && t <= kBudget8,
          fmt::format("median SI-SDRi {:.2f} dB on the {} training mixtures after {} steps (>= {} dB); "
                      "{:.0f} s total, {:.0f} s training (<= {} s)",
                      median, kFixedMixtures, kSteps, kLearnDb, t, train_s, kBudget8)};
}

// 9: E_HIGH conditioning picks the louder source on held-out mixtures.
Outcome conditioning_discrimination() {
  const auto t0 = std::chrono::steady_clock::now();
  // Reuses the criterion-8 run when it is on disk; the trainer resumes it otherwise.
  const auto model = train_energy_model(nullptr);
  const auto recipe = energy_recipe();
  const auto held_out = make_eval_set(recipe.generation, Concept::kEnergyHigh, 50, 9, Partition::kTest);
  std::vector<double> louder, quieter, mix_louder, mix_quieter, low_louder, low_quieter;
  for (const auto& s : held_out) {
    const auto high = model.forward(s.mixture, Concept::kEnergyHigh).first;
    const auto low = model.forward(s.mixture, Concept::kEnergyLow).first;
    // for E_HIGH queries the target is the louder source
    louder.push_back(si_sdr(high, s.target));
    quieter.push_back(si_sdr(high, s.other));
    low_louder.push_back(si_sdr(low, s.target));
    low_quieter.push_back(si_sdr(low, s.other));
    mix_louder.push_back(si_sdr(s.mixture, s.target));
    mix_quieter.push_back(si_sdr(s.mixture, s.other));
  }
  const double gap = aggregate_median(louder) - aggregate_median(quieter);
  const double mix_gap = aggregate_median(mix_louder) - aggregate_median(mix_quieter);
  const double low_gap = aggregate_median(low_quieter) - aggregate_median(low_louder);
  const double t = seconds_since(t0);
  return {gap >= kDiscriminationDb,
          fmt::format("E_HIGH estimate: median {:.2f} dB vs louder, {:.2f} dB vs quieter, gap {:.2f} dB (>= {} dB) on "
                      "50 held-out mixtures; for reference: unprocessed mixture gap {:.2f} dB, E_LOW estimate "
                      "favours the quieter source by {:.2f} dB; {:.0f} s",
                      aggregate_median(louder), aggregate_median(quieter), gap, kDiscriminationDb, mix_gap, low_gap,
                      t)};
}

std::vector<double> pool_scores(const EvalReport& r, bool degenerate) {
  std::vector<double> out;
  for (const auto& c : r.concepts) {
    if (degenerate) {
      out.insert(out.end(), c.all_match.scores.begin(), c.all_match.scores.end());
      out.insert(out.end(), c.none_match.scores.begin(), c.none_match.scores.end());
    } else {
      out.insert(out.end(), c.discriminative.scores.begin(), c.discriminative.scores.end());
    }
  }
  return out;
}

// 10: degenerate-ratio sweep at toy scale.
Outcome degenerate_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = load_experiment(fs::path(HETSEP_SOURCE_DIR) / "configs" / "tiny-degenerate-sweep.json");
  config.output_dir = g_work / "degenerate_sweep";
  fs::remove_all(config.output_dir);
  const auto points = run_sweep(config);
  std::vector<std::string> parts;
  std::vector<double> degenerate(points.size(), NAN), discriminative(points.size(), NAN);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].report) {
      parts.push_back(fmt::format("rho={} failed: {}", points[i].value.dump(), points[i].error));
      continue;
    }
    degenerate[i] = aggregate_median(pool_scores(*points[i].report, true));
    discriminative[i] = aggregate_median(pool_scores(*points[i].report, false));
    std::vector<std::string> sub;
    for (const auto& c : points[i].report->concepts) {
      sub.push_back(fmt::format("{} [x] {:.1f} [0] {:.1f}", concept_name(c.query), c.all_match.median.value_or(NAN),
                                c.none_match.median.value_or(NAN)));
    }
    parts.push_back(fmt::format("rho={}: degenerate {:.2f} dB, discriminative {:.2f} dB ({})", points[i].value.dump(),
                                degenerate[i], discriminative[i], fmt::join(sub, ", ")));
  }
  double best_gap = -HUGE_VAL;
  for (std::size_t i = 1; i < points.size(); ++i) best_gap = std::max(best_gap, degenerate[i] - degenerate[0]);
  const double t = seconds_since(t0);
  return {std::isfinite(best_gap) && best_gap >= kDegenerateGapDb && t <= kBudget10,
          fmt::format("{}; best degenerate gain over rho=0 {:.2f} dB (>= {} dB); {:.0f} s (<= {} s)",
                      fmt::join(parts, "; "), best_gap, kDegenerateGapDb, t, kBudget10)};
}

const std::map<int, std::pair<const char*, std::function<Outcome()>>>& criteria() {
  static const std::map<int, std::pair<const char*, std::function<Outcome()>>> table{
      {1, {"SI-SDR oracle equivalence", si_sdr_oracle}},
      {2, {"mixture consistency", mixture_consistency}},
      {3, {"FiLM accounting", film_accounting}},
      {4, {"gradient check", gradient_check}},
      {5, {"generation determinism and priors", generation_properties}},
      {6, {"PIT correctness", pit_correctness}},
      {7, {"RIR fidelity", rir_fidelity}},
      {8, {"desk-scale learning", desk_scale_learning}},
      {9, {"conditioning discrimination", conditioning_discrimination}},
      {10, {"degenerate-trend reproduction", degenerate_trend}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  g_self = fs::absolute(fs::path(argv[0])).string();
  g_work = fs::temp_directory_path() / "hetsep_acceptance";
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--eval-hash") {
      std::printf("%016llx\n", static_cast<unsigned long long>(eval_set_hash(1)));
      return 0;
    }
    if (arg == "--only" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else if (arg == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N]... [--work DIR]\n");
      return 2;
    }
  }
  fs::create_directories(g_work);
  if (selected.empty()) {
    for (const auto& [n, entry] : criteria()) selected.push_back(n);
  }
  int failed = 0;
  for (int n : selected) {
    const auto it = criteria().find(n);
    if (it == criteria().end()) {
      std::fprintf(stderr, "no criterion %d\n", n);
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    const std::string line =
        fmt::format("criterion {} ({}): {} - {}\n", n, it->second.first, o.pass ? "PASS" : "FAIL", o.detail);
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    // ctest hides the output of passing tests; keep a log next to the artifacts.
    if (std::FILE* log = std::fopen((g_work / "results.txt").c_str(), "a")) {
      std::fputs(line.c_str(), log);
      std::fclose(log);
    }
  }
  return failed == 0 ? 0 : 1;
}
