#include "hetsep/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hetsep/errors.hpp"
#include "hetsep/wav.hpp"

namespace hetsep {

using nlohmann::json;

std::string_view to_string(Gender g) noexcept { return g == Gender::kFemale ? "female" : "male"; }

std::string_view to_string(Language l) noexcept {
  switch (l) {
    case Language::kFrench:
      return "fr";
    case Language::kGerman:
      return "de";
    case Language::kSpanish:
      return "es";
    default:
      return "en";
  }
}

std::string_view to_string(Partition p) noexcept {
  switch (p) {
    case Partition::kTrain:
      return "train";
    case Partition::kVal:
      return "val";
    case Partition::kTest:
      return "test";
    default:
      return "all";
  }
}

std::string_view to_string(DomainName d) noexcept {
  switch (d) {
    case DomainName::kWsj:
      return "WSJ";
    case DomainName::kSlib:
      return "SLIB";
    case DomainName::kSvox:
      return "SVOX";
    default:
      return "TOY";
  }
}

Gender gender_from_string(std::string_view s) {
  if (s == "female" || s == "F" || s == "f") return Gender::kFemale;
  if (s == "male" || s == "M" || s == "m") return Gender::kMale;
  throw DataError("unknown gender '" + std::string(s) + "'");
}

Language language_from_string(std::string_view s) {
  if (s == "en") return Language::kEnglish;
  if (s == "fr") return Language::kFrench;
  if (s == "de") return Language::kGerman;
  if (s == "es") return Language::kSpanish;
  throw DataError("unknown language '" + std::string(s) + "'");
}

Partition partition_from_string(std::string_view s) {
  if (s == "train") return Partition::kTrain;
  if (s == "val") return Partition::kVal;
  if (s == "test") return Partition::kTest;
  if (s == "all") return Partition::kAll;
  throw DataError("unknown partition '" + std::string(s) + "'");
}

DomainName domain_from_string(std::string_view s) {
  if (s == "WSJ") return DomainName::kWsj;
  if (s == "SLIB") return DomainName::kSlib;
  if (s == "SVOX") return DomainName::kSvox;
  if (s == "TOY") return DomainName::kToy;
  throw ConfigError("unknown domain '" + std::string(s) + "'");
}

Concept to_concept(Gender g) noexcept { return g == Gender::kFemale ? Concept::kFemale : Concept::kMale; }

Concept to_concept(Language l) noexcept {
  switch (l) {
    case Language::kFrench:
      return Concept::kFrench;
    case Language::kGerman:
      return Concept::kGerman;
    case Language::kSpanish:
      return Concept::kSpanish;
    default:
      return Concept::kEnglish;
  }
}

bool DomainSpec::has(Condition c) const noexcept {
  return std::find(conditions.begin(), conditions.end(), c) != conditions.end();
}

DomainSpec domain_preset(DomainName name) {
  DomainSpec d;
  d.name = name;
  switch (name) {
    case DomainName::kWsj:
      d.conditions = {Condition::kEnergy, Condition::kGender};
      break;
    case DomainName::kSlib:
      d.conditions = {Condition::kEnergy, Condition::kGender, Condition::kSpatial};
      d.reverberant = true;
      d.rooms = slib_room_ranges();
      break;
    case DomainName::kSvox:
      d.conditions = {Condition::kEnergy, Condition::kLanguage, Condition::kSpatial};
      d.reverberant = true;
      d.rooms = svox_room_ranges();
      d.language_mix = LanguageMix::voxforge();
      break;
    case DomainName::kToy:
      d.conditions = {Condition::kEnergy, Condition::kGender, Condition::kLanguage};
      d.language_mix = LanguageMix::voxforge();
      break;
  }
  return d;
}

std::vector<std::string> Manifest::speakers() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.speaker_id);
  return {ids.begin(), ids.end()};
}

void validate_manifest(const Manifest& m) {
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    const auto where = "record '" + r.record_id + "'";
    if (r.record_id.empty()) throw DataError("record with empty record_id");
    if (!seen.insert(r.record_id).second) throw DataError("duplicate record_id: " + where);
    if (r.audio_ref.empty()) throw DataError(where + " has no audio_ref");
    if (r.speaker_id.empty()) throw DataError(where + " has no speaker_id");
    if (m.domain.has(Condition::kGender) && !r.gender) {
      throw DataError(where + " lacks gender required by domain " + std::string(to_string(m.domain.name)));
    }
    if (m.domain.has(Condition::kLanguage) && !r.language) {
      throw DataError(where + " lacks language required by domain " + std::string(to_string(m.domain.name)));
    }
    if (!(r.duration >= 4.0 - 1e-9)) {
      throw DataError(where + fmt::format(" is shorter than 4 s ({:.3f} s)", r.duration));
    }
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    const json header = json::parse(line);
    const int version = header.at("schema_version").get<int>();
    if (version != kManifestSchemaVersion) {
      throw DataError(fmt::format("{}: unsupported manifest schema_version {}", path.string(), version));
    }
    m.domain = domain_preset(domain_from_string(header.at("domain").get<std::string>()));
    m.partition = partition_from_string(header.at("partition").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad manifest header: " + e.what());
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SourceRecord r;
    try {
      const json j = json::parse(line);
      r.record_id = j.at("record_id").get<std::string>();
      r.audio_ref = j.at("audio_ref").get<std::string>();
      r.speaker_id = j.at("speaker_id").get<std::string>();
      if (j.contains("gender") && !j["gender"].is_null()) r.gender = gender_from_string(j["gender"].get<std::string>());
      if (j.contains("language") && !j["language"].is_null()) {
        r.language = language_from_string(j["language"].get<std::string>());
      }
      r.duration = j.at("duration").get<double>();
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: schema violation: {}", path.string(), line_no, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    m.records.push_back(std::move(r));
  }
  validate_manifest(m);
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  json header{{"schema_version", kManifestSchemaVersion},
              {"domain", to_string(m.domain.name)},
              {"partition", to_string(m.partition)}};
  out << header.dump() << '\n';
  for (const auto& r : m.records) {
    json j{{"record_id", r.record_id}, {"audio_ref", r.audio_ref}, {"speaker_id", r.speaker_id}};
    j["gender"] = r.gender ? json(to_string(*r.gender)) : json(nullptr);
    j["language"] = r.language ? json(to_string(*r.language)) : json(nullptr);
    j["duration"] = r.duration;
    out << j.dump() << '\n';
  }
}

const Manifest& CorpusSplit::get(Partition p) const {
  switch (p) {
    case Partition::kTrain:
      return train;
    case Partition::kVal:
      return val;
    case Partition::kTest:
      return test;
    default:
      throw ConfigError("CorpusSplit::get: partition 'all' has no manifest");
  }
}

void check_speaker_disjoint(const CorpusSplit& split) {
  std::map<std::string, Partition> owner;
  for (const Manifest* m : {&split.train, &split.val, &split.test}) {
    for (const auto& r : m->records) {
      const auto [it, inserted] = owner.emplace(r.speaker_id, m->partition);
      if (!inserted && it->second != m->partition) {
        throw DataError("speaker '" + r.speaker_id + "' appears in both " + std::string(to_string(it->second)) +
                        " and " + std::string(to_string(m->partition)));
      }
    }
  }
}

CorpusSplit load_corpus(const std::filesystem::path& train, const std::filesystem::path& val,
                        const std::filesystem::path& test) {
  CorpusSplit split{load_manifest(train), load_manifest(val), load_manifest(test)};
  split.train.partition = Partition::kTrain;
  split.val.partition = Partition::kVal;
  split.test.partition = Partition::kTest;
  check_speaker_disjoint(split);
  return split;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

std::array<std::size_t, 3> partition_sizes(std::size_t n, std::array<double, 3> ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0) || ratios[0] <= 0.0 || ratios[1] <= 0.0 || ratios[2] <= 0.0) {
    throw ConfigError("split ratios must be positive");
  }
  const auto val = std::max<std::size_t>(1, std::size_t(std::llround(double(n) * ratios[1] / total)));
  const auto test = std::max<std::size_t>(1, std::size_t(std::llround(double(n) * ratios[2] / total)));
  if (val + test >= n) return {n - 2, 1, 1};
  return {n - val - test, val, test};
}

Manifest with_partition(const Manifest& all, Partition p) {
  Manifest m;
  m.domain = all.domain;
  m.partition = p;
  m.base_dir = all.base_dir;
  return m;
}

void assign_records(const Manifest& all, const std::map<std::string, Partition>& owner, CorpusSplit& out) {
  for (const auto& r : all.records) {
    switch (owner.at(r.speaker_id)) {
      case Partition::kTrain:
        out.train.records.push_back(r);
        break;
      case Partition::kVal:
        out.val.records.push_back(r);
        break;
      default:
        out.test.records.push_back(r);
        break;
    }
  }
}

void split_group(std::vector<std::string> speakers, std::array<double, 3> ratios, Rng& rng,
                 std::map<std::string, Partition>& owner) {
  if (speakers.size() < 3) throw DataError("split_speakers: need at least 3 distinct speakers");
  shuffle(speakers, rng);
  const auto sizes = partition_sizes(speakers.size(), ratios);
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    owner[speakers[i]] = i < sizes[0] ? Partition::kTrain : i < sizes[0] + sizes[1] ? Partition::kVal : Partition::kTest;
  }
}

}  // namespace

CorpusSplit split_speakers(const Manifest& all, std::array<double, 3> ratios, std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0x5117ULL}));
  std::map<std::string, Partition> owner;
  split_group(all.speakers(), ratios, rng, owner);
  CorpusSplit out{with_partition(all, Partition::kTrain), with_partition(all, Partition::kVal),
                  with_partition(all, Partition::kTest)};
  assign_records(all, owner, out);
  return out;
}

CorpusSplit split_speakers_by_gender(const Manifest& all, std::array<double, 3> ratios, std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0x5117ULL, 1}));
  std::map<std::string, Partition> owner;
  std::map<int, std::set<std::string>> strata;
  for (const auto& r : all.records) strata[r.gender ? int(*r.gender) : -1].insert(r.speaker_id);
  for (const auto& [key, ids] : strata) split_group({ids.begin(), ids.end()}, ratios, rng, owner);
  CorpusSplit out{with_partition(all, Partition::kTrain), with_partition(all, Partition::kVal),
                  with_partition(all, Partition::kTest)};
  assign_records(all, owner, out);
  return out;
}

std::optional<ExpectedCounts> expected_counts(DomainName domain, Partition partition) {
  using P = Partition;
  switch (domain) {
    case DomainName::kWsj:
      if (partition == P::kTrain) return ExpectedCounts{8769, 101};
      if (partition == P::kVal) return ExpectedCounts{3557, 101};
      if (partition == P::kTest) return ExpectedCounts{1770, 18};
      break;
    case DomainName::kSlib:
      if (partition == P::kTrain) return ExpectedCounts{132553, 1172};
      if (partition == P::kVal) return ExpectedCounts{2703, 40};
      if (partition == P::kTest) return ExpectedCounts{2620, 40};
      break;
    case DomainName::kSvox:
      if (partition == P::kTrain) return ExpectedCounts{124937, 2347};
      if (partition == P::kVal) return ExpectedCounts{10244, 279};
      if (partition == P::kTest) return ExpectedCounts{11083, 294};
      break;
    default:
      break;
  }
  return std::nullopt;
}

std::vector<std::string> check_expected_counts(const Manifest& m) {
  std::vector<std::string> issues;
  const auto expected = expected_counts(m.domain.name, m.partition);
  if (!expected) return issues;
  const auto label = fmt::format("{} {}", to_string(m.domain.name), to_string(m.partition));
  if (m.records.size() != expected->recordings) {
    issues.push_back(fmt::format("{}: {} recordings, expected {}", label, m.records.size(), expected->recordings));
  }
  const auto speakers = m.speakers().size();
  if (speakers != expected->speakers) {
    issues.push_back(fmt::format("{}: {} speakers, expected {}", label, speakers, expected->speakers));
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Toy speech

double language_formant_hz(Language l) noexcept {
  switch (l) {
    case Language::kFrench:
      return 900.0;
    case Language::kGerman:
      return 1500.0;
    case Language::kSpanish:
      return 2300.0;
    default:
      return 400.0;
  }
}

std::string ToyVoice::to_ref() const {
  return fmt::format("toy:f0={};lo={};hi={};rate={};lang={};dur={};fs={};seed={}", f0, pitch_bounds.lo,
                     pitch_bounds.hi, syllable_rate, to_string(language), duration, sample_rate, seed);
}

ToyVoice ToyVoice::from_ref(std::string_view ref) {
  if (!ref.starts_with("toy:")) throw DataError("not a toy audio_ref: " + std::string(ref));
  std::map<std::string, std::string, std::less<>> fields;
  std::string body(ref.substr(4));
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("malformed toy audio_ref: " + std::string(ref));
    fields[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto number = [&](const char* key) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw DataError(std::string("toy audio_ref missing '") + key + "': " + std::string(ref));
    return std::stod(it->second);
  };
  ToyVoice v;
  v.f0 = number("f0");
  v.pitch_bounds = {number("lo"), number("hi")};
  v.syllable_rate = number("rate");
  v.duration = number("dur");
  v.sample_rate = int(number("fs"));
  const auto lang = fields.find("lang");
  if (lang == fields.end()) throw DataError("toy audio_ref missing 'lang': " + std::string(ref));
  v.language = language_from_string(lang->second);
  const auto seed = fields.find("seed");
  if (seed == fields.end()) throw DataError("toy audio_ref missing 'seed': " + std::string(ref));
  v.seed = std::stoull(seed->second);
  return v;
}

Waveform render_toy_voice(const ToyVoice& voice) {
  const double fs = voice.sample_rate;
  const auto n = std::size_t(std::llround(voice.duration * fs));
  Waveform w(n, voice.sample_rate);
  Rng rng(voice.seed);

  // Syllable envelope: Hann-shaped bursts at the syllable rate with occasional pauses.
  std::vector<double> envelope(n, 0.0);
  for (double t = 0.0; t < voice.duration;) {
    const double len = rng.uniform(0.7, 1.3) / voice.syllable_rate;
    const double amp = rng.bernoulli(0.15) ? 0.0 : rng.uniform(0.5, 1.0);
    const auto begin = std::size_t(t * fs);
    const auto end = std::min(n, std::size_t((t + len) * fs));
    for (std::size_t i = begin; i < end; ++i) {
      const double s = std::sin(std::numbers::pi * (double(i) / fs - t) / len);
      envelope[i] = amp * s * s;
    }
    t += len;
  }

  const double formant = language_formant_hz(voice.language);
  const double bandwidth = 250.0 + 0.2 * formant;
  const double drift_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double drift_rate = rng.uniform(0.3, 0.8);
  const int harmonics = std::max(1, int(0.95 * (fs / 2.0) / voice.pitch_bounds.hi));
  std::vector<double> gains(std::size_t(harmonics) + 1, 0.0);
  constexpr std::size_t kBlock = 80;

  double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double f0 = voice.f0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % kBlock == 0) {
      const double t = double(i) / fs;
      f0 = voice.f0 * (1.0 + 0.04 * std::sin(2.0 * std::numbers::pi * drift_rate * t + drift_phase));
      f0 = std::clamp(f0, voice.pitch_bounds.lo, voice.pitch_bounds.hi);
      for (int k = 1; k <= harmonics; ++k) {
        const double f = k * f0;
        const double z = (f - formant) / bandwidth;
        gains[std::size_t(k)] = f < 0.95 * fs / 2.0 ? (0.25 + std::exp(-0.5 * z * z)) / std::sqrt(double(k)) : 0.0;
      }
    }
    phase += 2.0 * std::numbers::pi * f0 / fs;
    if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
    // sin(k phase) by the Chebyshev recursion.
    const double c2 = 2.0 * std::cos(phase);
    double prev = 0.0;
    double cur = std::sin(phase);
    double voiced = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      voiced += gains[std::size_t(k)] * cur;
      const double next = c2 * cur - prev;
      prev = cur;
      cur = next;
    }
    w[i] = envelope[i] * (voiced + 0.05 * rng.normal());
  }

  const double rms = std::sqrt(energy(w) / double(std::max<std::size_t>(n, 1)));
  if (rms > 0.0) {
    for (double& v : w.samples) v *= 0.1 / rms;
  }
  return w;
}

Manifest synth_toy_corpus(const ToyCorpusOptions& options) {
  if (options.n_speakers < 2) throw ConfigError("synth_toy_corpus: need at least 2 speakers");
  if (options.records_per_speaker < 1) throw ConfigError("synth_toy_corpus: need at least 1 record per speaker");
  if (options.duration.lo < 4.0) throw ConfigError("synth_toy_corpus: records must last at least 4 s");
  const auto n = std::size_t(options.n_speakers);
  Rng rng(derive_seed({options.seed, 0x70ULL}));

  // Largest-remainder allocation of speakers to languages, then a shuffle.
  const auto& weights = options.language_mix.weights;
  const double total = weights[0] + weights[1] + weights[2] + weights[3];
  if (!(total > 0.0)) throw ConfigError("synth_toy_corpus: language mix must have positive mass");
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainders{};
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < 4; ++l) {
    const double exact = double(n) * weights[l] / total;
    counts[l] = std::size_t(std::floor(exact));
    remainders[l] = exact - double(counts[l]);
    assigned += counts[l];
  }
  while (assigned < n) {
    const auto l = std::size_t(std::max_element(remainders.begin(), remainders.end()) - remainders.begin());
    ++counts[l];
    remainders[l] = -1.0;
    ++assigned;
  }
  std::vector<Language> languages;
  for (std::size_t l = 0; l < 4; ++l) languages.insert(languages.end(), counts[l], Language(l));
  shuffle(languages, rng);

  const auto females = std::size_t(std::llround(double(n) * std::clamp(options.female_fraction, 0.0, 1.0)));
  std::vector<Gender> genders(n, Gender::kMale);
  std::fill_n(genders.begin(), females, Gender::kFemale);
  shuffle(genders, rng);

  Manifest m;
  m.domain = domain_preset(options.domain);
  m.partition = Partition::kAll;
  for (std::size_t s = 0; s < n; ++s) {
    const Range pitch = genders[s] == Gender::kFemale ? kFemalePitch : kMalePitch;
    const double f0 = pitch.sample(rng);
    const double rate = rng.uniform(2.5, 7.0);
    const auto speaker_id = fmt::format("toy-s{:03d}", s);
    for (int r = 0; r < options.records_per_speaker; ++r) {
      ToyVoice v;
      v.f0 = f0;
      v.pitch_bounds = pitch;
      v.syllable_rate = std::clamp(rate * rng.uniform(0.9, 1.1), 2.0, 8.0);
      v.language = languages[s];
      v.duration = std::round(options.duration.sample(rng) * 1000.0) / 1000.0;
      v.sample_rate = options.sample_rate;
      v.seed = derive_seed({options.seed, s, std::uint64_t(r)});
      SourceRecord rec;
      rec.record_id = fmt::format("{}-r{:03d}", speaker_id, r);
      rec.audio_ref = v.to_ref();
      rec.speaker_id = speaker_id;
      rec.gender = genders[s];
      rec.language = languages[s];
      rec.duration = v.duration;
      m.records.push_back(std::move(rec));
    }
  }
  return m;
}

void materialize_toy_audio(Manifest& m, const std::filesystem::path& dir) {
  for (auto& r : m.records) {
    if (!r.audio_ref.starts_with("toy:")) continue;
    const auto rel = std::filesystem::path("audio") / (r.record_id + ".wav");
    write_wav(dir / rel, render_toy_voice(ToyVoice::from_ref(r.audio_ref)), WavFormat::kFloat32);
    r.audio_ref = rel.string();
  }
  m.base_dir = dir;
}

Waveform load_record_audio(const SourceRecord& record, const std::filesystem::path& base_dir, int sample_rate) {
  Waveform audio;
  if (record.audio_ref.starts_with("toy:")) {
    audio = render_toy_voice(ToyVoice::from_ref(record.audio_ref));
  } else {
    std::filesystem::path p(record.audio_ref);
    if (p.is_relative()) p = base_dir / p;
    try {
      audio = read_wav(p);
    } catch (const IoError& e) {
      throw DataError("record '" + record.record_id + "': unreadable audio: " + e.what());
    }
  }
  return audio.sample_rate == sample_rate ? audio : resample(audio, sample_rate);
}

Waveform crop(const Waveform& audio, std::size_t length, Rng& rng) {
  if (audio.size() < length) {
    throw DataError(fmt::format("clip of {} samples is shorter than the requested {}", audio.size(), length));
  }
  const std::size_t start = rng.below(audio.size() - length + 1);
  Waveform out(length, audio.sample_rate);
  std::copy_n(audio.samples.begin() + std::ptrdiff_t(start), length, out.samples.begin());
  return out;
}

Waveform get_clip(const SourceRecord& record, const std::filesystem::path& base_dir, std::size_t length, Rng& rng,
                  int sample_rate) {
  return crop(load_record_audio(record, base_dir, sample_rate), length, rng);
}

}  // namespace hetsep
