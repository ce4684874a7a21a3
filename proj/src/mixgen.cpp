#include "hetsep/mixgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hetsep/errors.hpp"
#include "hetsep/wav.hpp"

namespace hetsep {

using nlohmann::json;

std::string_view to_string(SpatialPairing p) noexcept {
  return p == SpatialPairing::kAlwaysNearFar ? "always_near_far" : "uniform_over_pairs";
}

SpatialPairing spatial_pairing_from_string(std::string_view s) {
  if (s == "always_near_far") return SpatialPairing::kAlwaysNearFar;
  if (s == "uniform_over_pairs") return SpatialPairing::kUniformOverPairs;
  throw ConfigError("unknown spatial pairing '" + std::string(s) + "'");
}

void GenerationConfig::resolve() {
  const bool with_svox = std::any_of(domains.begin(), domains.end(),
                                     [](const DomainEntry& d) { return d.spec.name == DomainName::kSvox; });
  for (auto& d : domains) {
    if (!d.snr_range) {
      switch (d.spec.name) {
        case DomainName::kSvox:
          d.snr_range = Range{0.0, 2.5};
          break;
        case DomainName::kSlib:
          d.snr_range = with_svox ? Range{0.0, 2.5} : Range{0.0, 5.0};
          break;
        default:
          d.snr_range = Range{0.0, 5.0};
          break;
      }
    }
    if (!d.spatial_pairing) {
      d.spatial_pairing = d.spec.name == DomainName::kSlib && !with_svox ? SpatialPairing::kAlwaysNearFar
                                                                         : SpatialPairing::kUniformOverPairs;
    }
  }
}

void GenerationConfig::validate() const {
  if (domains.empty()) throw ConfigError("generation: no domains configured");
  double prior_sum = 0.0;
  for (const auto& d : domains) {
    const auto name = std::string(to_string(d.spec.name));
    if (d.prior < 0.0) throw ConfigError("generation: negative prior for domain " + name);
    prior_sum += d.prior;
    double concept_sum = 0.0;
    for (const auto& [v, p] : d.condition_priors) {
      if (p < 0.0) throw ConfigError("generation: negative query prior in domain " + name);
      if (p > 0.0 && !d.spec.has(condition_of(v))) {
        throw ConfigError(fmt::format("generation: query {} is not valid for domain {}", concept_name(v), name));
      }
      concept_sum += p;
    }
    if (d.prior > 0.0 && std::abs(concept_sum - 1.0) > 1e-6) {
      throw ConfigError(fmt::format("generation: query priors of domain {} sum to {}, not 1", name, concept_sum));
    }
    if (d.spec.has(Condition::kSpatial) && (!d.spec.reverberant || !d.spec.rooms)) {
      throw ConfigError("generation: spatial condition requires a reverberant domain with room ranges: " + name);
    }
    if (!d.corpus) throw ConfigError("generation: domain " + name + " has no corpus");
    if (d.snr_range && d.snr_range->lo > d.snr_range->hi) throw ConfigError("generation: empty SNR range for " + name);
  }
  if (std::abs(prior_sum - 1.0) > 1e-6) {
    throw ConfigError(fmt::format("generation: domain priors sum to {}, not 1", prior_sum));
  }
  for (double rho : degenerate_ratio) {
    if (rho < 0.0 || rho > 1.0) throw ConfigError("generation: degenerate ratio outside [0, 1]");
  }
  if (degenerate_all_match_fraction < 0.0 || degenerate_all_match_fraction > 1.0) {
    throw ConfigError("generation: degenerate_all_match_fraction outside [0, 1]");
  }
  if (overlap.lo < 0.0 || overlap.hi > 1.0 || overlap.lo > overlap.hi) {
    throw ConfigError("generation: overlap range must lie in [0, 1]");
  }
  if (clip_samples == 0) throw ConfigError("generation: clip_samples must be positive");
  if (max_retries < 1) throw ConfigError("generation: max_retries must be positive");
}

std::uint64_t MixtureSample::fingerprint() const {
  ContentHash h;
  h.add(mixture.view()).add(target.view()).add(other.view());
  h.add(std::uint64_t(concept_index(query))).add(std::uint64_t(degeneracy)).add(std::uint64_t(domain));
  for (const auto& s : sources) {
    h.add(s.record_id).add(s.speaker_id).add(std::uint64_t(s.onset)).add(s.gain);
    for (Condition c : kAllConditions) {
      const auto v = s.profile.get(c);
      h.add(std::uint64_t(v ? concept_index(*v) + 1 : 0));
    }
    if (s.placement) h.add(s.placement->position.x).add(s.placement->position.y).add(s.placement->position.z);
  }
  h.add(snr_db).add(std::uint64_t(louder)).add(overlap).add(base_seed).add(std::uint64_t(split)).add(index);
  return h.value();
}

namespace {

Rng mixture_rng(Partition split, std::uint64_t index, std::uint64_t base_seed) {
  return Rng(derive_seed({base_seed, std::uint64_t(split), index}));
}

MixturePlan draw_plan(const GenerationConfig& config, Rng& rng, std::optional<Concept> forced) {
  MixturePlan plan;
  std::vector<double> weights;
  for (const auto& d : config.domains) {
    double w = d.prior;
    if (forced) {
      const auto it = d.condition_priors.find(*forced);
      const bool valid = d.spec.has(condition_of(*forced));
      // Prefer domains that train on the query; fall back to any domain that defines it.
      w = valid ? (it != d.condition_priors.end() && it->second > 0.0 ? d.prior : 0.0) : 0.0;
    }
    weights.push_back(w);
  }
  if (forced && std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; })) {
    for (std::size_t i = 0; i < config.domains.size(); ++i) {
      weights[i] = config.domains[i].spec.has(condition_of(*forced)) ? 1.0 : 0.0;
    }
  }
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; })) {
    throw ConfigError(fmt::format("no configured domain defines query {}", concept_name(*forced)));
  }
  plan.domain = rng.categorical(weights);
  const auto& domain = config.domains[plan.domain];
  if (forced) {
    plan.query = *forced;
  } else {
    std::vector<Concept> values;
    std::vector<double> probs;
    for (const auto& [v, p] : domain.condition_priors) {
      values.push_back(v);
      probs.push_back(p);
    }
    plan.query = values[rng.categorical(probs)];
  }
  const double rho = config.degenerate_ratio[condition_index(condition_of(plan.query))];
  if (rng.bernoulli(rho)) {
    plan.degeneracy = rng.bernoulli(config.degenerate_all_match_fraction) ? Degeneracy::kAllMatch
                                                                          : Degeneracy::kNoneMatch;
  }
  return plan;
}

std::optional<Concept> record_value(const SourceRecord& r, Condition c) {
  if (c == Condition::kGender && r.gender) return to_concept(*r.gender);
  if (c == Condition::kLanguage && r.language) return to_concept(*r.language);
  return std::nullopt;
}

template <typename Pred>
const SourceRecord& draw_record(const Manifest& m, Rng& rng, int retries, Pred pred, const std::string& what) {
  if (m.records.empty()) throw DataError("no records in the " + std::string(to_string(m.partition)) + " partition");
  for (int i = 0; i < retries; ++i) {
    const auto& r = m.records[rng.below(m.records.size())];
    if (pred(r)) return r;
  }
  throw DataError(fmt::format("unsatisfiable sampling constraint after {} draws in {} {}: {}", retries,
                              to_string(m.domain.name), to_string(m.partition), what));
}

Concept complement(Concept v) {
  switch (v) {
    case Concept::kEnergyHigh:
      return Concept::kEnergyLow;
    case Concept::kEnergyLow:
      return Concept::kEnergyHigh;
    case Concept::kNear:
      return Concept::kFar;
    case Concept::kFar:
      return Concept::kNear;
    case Concept::kFemale:
      return Concept::kMale;
    case Concept::kMale:
      return Concept::kFemale;
    default:
      return v;
  }
}


// A crop window over a pause is silent; redraw the window a few times before giving up.
Waveform audible_crop(const Waveform& audio, std::size_t length, Rng& rng, const SourceRecord& record) {
  constexpr int kAttempts = 8;
  for (int i = 0; i < kAttempts; ++i) {
    Waveform clip = crop(audio, length, rng);
    if (energy(clip) > 0.0) return clip;
  }
  throw DataError("record '" + record.record_id + "' produced a silent clip");
}

}  // namespace

MixturePlan plan_mixture(const GenerationConfig& config, Partition split, std::uint64_t index,
                         std::uint64_t base_seed, std::optional<Concept> forced) {
  Rng rng = mixture_rng(split, index, base_seed);
  return draw_plan(config, rng, forced);
}

MixtureSample sample_mixture(const GenerationConfig& config, Partition split, std::uint64_t index,
                             std::uint64_t base_seed, std::optional<Concept> forced) {
  Rng rng = mixture_rng(split, index, base_seed);
  const MixturePlan plan = draw_plan(config, rng, forced);
  const DomainEntry& domain = config.domains[plan.domain];
  const Manifest& manifest = domain.corpus->get(split);
  const Concept v = plan.query;
  const Condition kind = condition_of(v);
  const int retries = config.max_retries;

  MixtureSample out;
  out.query = v;
  out.condition = encode_concept(v);
  out.degeneracy = plan.degeneracy;
  out.domain = domain.spec.name;
  out.base_seed = base_seed;
  out.split = split;
  out.index = index;

  // Source selection; `a` is the source that matches v unless no source should.
  const SourceRecord* a = nullptr;
  const SourceRecord* b = nullptr;
  if (kind == Condition::kGender || kind == Condition::kLanguage) {
    auto has = [&](const SourceRecord& r) { return record_value(r, kind) == v; };
    auto lacks = [&](const SourceRecord& r) {
      const auto value = record_value(r, kind);
      return value && *value != v;
    };
    const auto name = std::string(concept_name(v));
    switch (plan.degeneracy) {
      case Degeneracy::kNone:
        a = &draw_record(manifest, rng, retries, has, "a source with " + name);
        b = &draw_record(manifest, rng, retries, [&](const SourceRecord& r) { return lacks(r) && r.speaker_id != a->speaker_id; },
                         "a second speaker without " + name);
        break;
      case Degeneracy::kAllMatch:
        a = &draw_record(manifest, rng, retries, has, "a source with " + name);
        b = &draw_record(manifest, rng, retries, [&](const SourceRecord& r) { return has(r) && r.speaker_id != a->speaker_id; },
                         "two speakers with " + name);
        break;
      case Degeneracy::kNoneMatch:
        a = &draw_record(manifest, rng, retries, lacks, "a source without " + name);
        b = &draw_record(manifest, rng, retries,
                         [&](const SourceRecord& r) {
                           return record_value(r, kind) == record_value(*a, kind) && r.speaker_id != a->speaker_id;
                         },
                         "two speakers sharing a value other than " + name);
        break;
    }
  } else {
    a = &draw_record(manifest, rng, retries, [](const SourceRecord&) { return true; }, "any source");
    b = &draw_record(manifest, rng, retries, [&](const SourceRecord& r) { return r.speaker_id != a->speaker_id; },
                     "a second speaker");
  }
  const bool swapped = rng.bernoulli(0.5);
  std::array<const SourceRecord*, 2> records{swapped ? b : a, swapped ? a : b};
  const std::size_t matching_slot = swapped ? 1 : 0;  // slot holding `a`

  std::array<ConceptProfile, 2> profiles;
  for (std::size_t i = 0; i < 2; ++i) {
    for (Condition c : {Condition::kGender, Condition::kLanguage}) {
      if (!domain.spec.has(c)) continue;
      const auto value = record_value(*records[i], c);
      if (!value) throw DataError("record '" + records[i]->record_id + "' lacks metadata for its domain");
      profiles[i].set(*value);
    }
  }

  // Audio, optional reverberation, crop.
  std::array<Waveform, 2> sources;
  if (domain.spec.reverberant) {
    const RoomRanges& ranges = *domain.spec.rooms;
    RoomSpec room = sample_room(ranges, rng);
    std::array<FieldClass, 2> fields{};
    if (kind == Condition::kSpatial) {
      const FieldClass wanted = v == Concept::kNear ? FieldClass::kNear : FieldClass::kFar;
      const FieldClass opposite = wanted == FieldClass::kNear ? FieldClass::kFar : FieldClass::kNear;
      switch (plan.degeneracy) {
        case Degeneracy::kNone:
          fields[matching_slot] = wanted;
          fields[1 - matching_slot] = opposite;
          break;
        case Degeneracy::kAllMatch:
          fields = {wanted, wanted};
          break;
        case Degeneracy::kNoneMatch:
          fields = {opposite, opposite};
          break;
      }
    } else if (*domain.spatial_pairing == SpatialPairing::kAlwaysNearFar) {
      const bool near_first = rng.bernoulli(0.5);
      fields = {near_first ? FieldClass::kNear : FieldClass::kFar, near_first ? FieldClass::kFar : FieldClass::kNear};
    } else {
      switch (rng.below(3)) {
        case 0:
          fields = {FieldClass::kNear, FieldClass::kNear};
          break;
        case 1:
          fields = {FieldClass::kFar, FieldClass::kFar};
          break;
        default: {
          const bool near_first = rng.bernoulli(0.5);
          fields = {near_first ? FieldClass::kNear : FieldClass::kFar,
                    near_first ? FieldClass::kFar : FieldClass::kNear};
        }
      }
    }
    std::optional<RirCache> cache;
    if (config.rir_cache_dir) cache.emplace(*config.rir_cache_dir);
    for (std::size_t i = 0; i < 2; ++i) {
      const SourcePlacement placement = place_source(room, fields[i], ranges, rng);
      const Rir rir = cache ? cache->get(room, placement.position, config.max_order, config.sample_rate)
                            : image_source_rir(room, placement.position, config.max_order, config.sample_rate);
      const Waveform dry = load_record_audio(*records[i], manifest.base_dir, config.sample_rate);
      sources[i] = audible_crop(spatialize(dry, rir), config.clip_samples, rng, *records[i]);
      out.sources[i].placement = placement;
      if (domain.spec.has(Condition::kSpatial)) {
        profiles[i].set(fields[i] == FieldClass::kNear ? Concept::kNear : Concept::kFar);
      }
    }
    out.room = room;
  } else {
    for (std::size_t i = 0; i < 2; ++i) {
      const Waveform dry = load_record_audio(*records[i], manifest.base_dir, config.sample_rate);
      sources[i] = audible_crop(dry, config.clip_samples, rng, *records[i]);
    }
  }
  // Overlap: delay the second source's onset inside the fixed frame.
  out.overlap = config.overlap.sample(rng);
  const auto shift = std::size_t(std::llround((1.0 - out.overlap) * double(config.clip_samples)));
  sources[1] = delay(sources[1], shift);
  out.sources[1].onset = shift;
  if (energy(sources[1]) <= 0.0) throw DataError("overlap delay removed all energy of the second source");

  // SNR between the louder and the quieter source.
  const bool energy_query = kind == Condition::kEnergy;
  const bool degenerate_energy = energy_query && plan.degeneracy != Degeneracy::kNone;
  const double ambiguity = config.exclude_ambiguous_energy ? config.energy_ambiguity_db : 0.0;
  Range snr_range = *domain.snr_range;
  if (degenerate_energy) {
    snr_range = Range{0.0, ambiguity};
  } else if (energy_query && config.exclude_ambiguous_energy) {
    snr_range = config.snr_range_energy_conditioned;
  }
  out.louder = rng.below(2);
  const std::size_t quieter = 1 - out.louder;
  const Waveform quiet_raw = sources[quieter];
  std::vector<EnergyLabel> labels;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= retries) throw DataError("could not draw an unambiguous SNR for an energy-conditioned mixture");
    out.snr_db = snr_range.sample(rng);
    const double gain = snr_gain(sources[out.louder], quiet_raw, out.snr_db);
    sources[quieter] = gain * quiet_raw;
    out.sources[quieter].gain = gain;
    out.sources[out.louder].gain = 1.0;
    labels = assign_energy_concepts(sources, ambiguity);
    const bool ambiguous = labels[0] == EnergyLabel::kAmbiguous;
    if (!energy_query || degenerate_energy || !ambiguous) break;
  }

  for (std::size_t i = 0; i < 2; ++i) {
    if (degenerate_energy) {
      profiles[i].set(plan.degeneracy == Degeneracy::kAllMatch ? v : complement(v));
    } else if (labels[i] == EnergyLabel::kHigh) {
      profiles[i].set(Concept::kEnergyHigh);
    } else if (labels[i] == EnergyLabel::kLow) {
      profiles[i].set(Concept::kEnergyLow);
    } else {
      profiles[i].clear(Condition::kEnergy);
    }
  }
  TargetSubmix submix = target_submix(sources, profiles, v);
  if (submix.degeneracy != plan.degeneracy) {
    throw DataError("internal: generated degeneracy does not match the sampling plan");
  }
  out.target = std::move(submix.target);
  out.other = std::move(submix.other);
  out.mixture = out.target + out.other;
  for (std::size_t i = 0; i < 2; ++i) {
    out.sources[i].record_id = records[i]->record_id;
    out.sources[i].speaker_id = records[i]->speaker_id;
    out.sources[i].profile = profiles[i];
  }
  return out;
}

std::vector<MixtureSample> sample_mixtures(const GenerationConfig& config, Partition split,
                                           std::span<const std::uint64_t> indices, std::uint64_t base_seed,
                                           std::optional<Concept> forced, unsigned workers) {
  std::vector<MixtureSample> out(indices.size());
  workers = std::max(1u, std::min<unsigned>(workers, unsigned(indices.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = sample_mixture(config, split, indices[i], base_seed, forced);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < indices.size(); i = next++) {
          out[i] = sample_mixture(config, split, indices[i], base_seed, forced);
        }
      } catch (...) {
        errors[w] = std::current_exception();
        next = indices.size();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::uint64_t eval_set_seed(std::uint64_t seed, Concept query) {
  return derive_seed({seed, 0xe7a1ULL, concept_index(query)});
}

std::vector<MixtureSample> make_eval_set(const GenerationConfig& config, Concept query, std::size_t n,
                                         std::uint64_t seed, Partition split, unsigned workers) {
  std::vector<std::uint64_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  return sample_mixtures(config, split, indices, eval_set_seed(seed, query), query, workers);
}

namespace {

json profile_json(const ConceptProfile& p) {
  json j = json::object();
  for (Condition c : kAllConditions) {
    if (const auto v = p.get(c)) j[std::string(condition_name(c))] = concept_name(*v);
  }
  return j;
}

ConceptProfile profile_from_json(const json& j) {
  ConceptProfile p;
  for (const auto& [key, value] : j.items()) {
    (void)condition_from_name(key);
    p.set(concept_from_name(value.get<std::string>()));
  }
  return p;
}

json sample_json(const MixtureSample& s, const std::string& stem) {
  json sources = json::array();
  for (const auto& src : s.sources) {
    json j{{"record_id", src.record_id},
           {"speaker_id", src.speaker_id},
           {"profile", profile_json(src.profile)},
           {"onset", src.onset},
           {"gain", src.gain}};
    if (src.placement) {
      j["placement"] = {{"field", to_string(src.placement->field)},
                        {"distance", src.placement->distance},
                        {"azimuth", src.placement->azimuth},
                        {"source_height", src.placement->source_height},
                        {"position", {src.placement->position.x, src.placement->position.y, src.placement->position.z}}};
    }
    sources.push_back(std::move(j));
  }
  json j{{"stem", stem},
         {"query", concept_name(s.query)},
         {"degeneracy", degeneracy_name(s.degeneracy)},
         {"domain", to_string(s.domain)},
         {"sources", std::move(sources)},
         {"snr_db", s.snr_db},
         {"louder", s.louder},
         {"overlap", s.overlap},
         {"seed_tuple", {{"base_seed", s.base_seed}, {"split", to_string(s.split)}, {"index", s.index}}}};
  if (s.room) {
    j["room"] = {{"length", s.room->length},
                 {"width", s.room->width},
                 {"height", s.room->height},
                 {"rt60", s.room->rt60},
                 {"mic", {s.room->mic.x, s.room->mic.y, s.room->mic.z}}};
  }
  return j;
}

}  // namespace

void save_eval_set(const std::vector<MixtureSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "metadata.jsonl");
  if (!meta) throw IoError("cannot write " + (dir / "metadata.jsonl").string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto stem = fmt::format("{:05d}", i);
    write_wav(dir / (stem + "_x.wav"), samples[i].mixture);
    write_wav(dir / (stem + "_target.wav"), samples[i].target);
    write_wav(dir / (stem + "_other.wav"), samples[i].other);
    meta << sample_json(samples[i], stem).dump() << '\n';
  }
}

std::vector<MixtureSample> load_eval_set(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "metadata.jsonl");
  if (!meta) throw IoError("cannot open " + (dir / "metadata.jsonl").string());
  std::vector<MixtureSample> out;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    MixtureSample s;
    const auto stem = j.at("stem").get<std::string>();
    s.mixture = read_wav(dir / (stem + "_x.wav"));
    s.target = read_wav(dir / (stem + "_target.wav"));
    s.other = read_wav(dir / (stem + "_other.wav"));
    s.query = concept_from_name(j.at("query").get<std::string>());
    s.condition = encode_concept(s.query);
    s.degeneracy = degeneracy_from_name(j.at("degeneracy").get<std::string>());
    s.domain = domain_from_string(j.at("domain").get<std::string>());
    for (std::size_t i = 0; i < 2 && i < j.at("sources").size(); ++i) {
      const auto& src = j["sources"][i];
      s.sources[i].record_id = src.at("record_id").get<std::string>();
      s.sources[i].speaker_id = src.at("speaker_id").get<std::string>();
      s.sources[i].profile = profile_from_json(src.at("profile"));
      s.sources[i].onset = src.at("onset").get<std::size_t>();
      s.sources[i].gain = src.at("gain").get<double>();
    }
    s.snr_db = j.at("snr_db").get<double>();
    s.louder = j.at("louder").get<std::size_t>();
    s.overlap = j.at("overlap").get<double>();
    s.base_seed = j.at("seed_tuple").at("base_seed").get<std::uint64_t>();
    s.split = partition_from_string(j["seed_tuple"].at("split").get<std::string>());
    s.index = j["seed_tuple"].at("index").get<std::uint64_t>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hetsep
