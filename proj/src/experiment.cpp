#include "hetsep/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hetsep/checkpoint.hpp"
#include "hetsep/config_io.hpp"
#include "hetsep/errors.hpp"
#include "hetsep/rng.hpp"

namespace hetsep {

using nlohmann::json;

namespace {

// Reads an object field by field and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  std::optional<T> get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    try {
      return it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}.{}: {}", where_, key, e.what()));
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (auto v = get<T>(key)) out = *v;
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where_, key));
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Range range_from(const std::vector<double>& v, const std::string& where) {
  if (v.size() != 2 || v[0] > v[1]) throw ConfigError(where + " must be [lo, hi] with lo <= hi");
  return {v[0], v[1]};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

ToyCorpusOptions toy_options_from(const json& j, int sample_rate) {
  Fields f(j, "corpus.toy");
  ToyCorpusOptions o;
  f.read("n_speakers", o.n_speakers);
  f.read("records_per_speaker", o.records_per_speaker);
  if (auto mix = f.get<std::vector<double>>("language_mix")) {
    if (mix->size() != 4) throw ConfigError("corpus.toy.language_mix needs 4 weights (en, fr, de, es)");
    std::copy(mix->begin(), mix->end(), o.language_mix.weights.begin());
  }
  f.read("female_fraction", o.female_fraction);
  if (auto d = f.get<std::vector<double>>("duration")) o.duration = range_from(*d, "corpus.toy.duration");
  f.read("seed", o.seed);
  f.finish();
  o.sample_rate = sample_rate;
  return o;
}

DomainEntry domain_from(const json& j, const std::filesystem::path& base, int sample_rate, std::size_t index) {
  const auto where = fmt::format("generation.domains[{}]", index);
  Fields f(j, where);
  DomainEntry d;
  const auto name = f.get<std::string>("name");
  if (!name) throw ConfigError(where + ".name is required");
  try {
    d.spec = domain_preset(domain_from_string(*name));
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  f.read("prior", d.prior);
  if (auto priors = f.get<std::map<std::string, double>>("concept_priors")) {
    for (const auto& [k, p] : *priors) d.condition_priors[concept_from_name(k)] = p;
  } else {
    throw ConfigError(where + ".concept_priors is required");
  }
  if (auto r = f.get<std::vector<double>>("snr_range")) d.snr_range = range_from(*r, where + ".snr_range");
  if (auto s = f.get<std::string>("spatial_pairing")) d.spatial_pairing = spatial_pairing_from_string(*s);
  const json* corpus = f.child("corpus");
  if (!corpus) throw ConfigError(where + ".corpus is required");
  Fields c(*corpus, where + ".corpus");
  std::uint64_t split_seed = 0;
  c.read("split_seed", split_seed);
  const json* toy = c.child("toy");
  const json* manifests = c.child("manifests");
  c.finish();
  if (bool(toy) == bool(manifests)) throw ConfigError(where + ".corpus needs exactly one of 'toy' or 'manifests'");
  if (toy) {
    ToyCorpusOptions o = toy_options_from(*toy, sample_rate);
    o.domain = d.spec.name;
    d.corpus = toy_corpus_split(o, split_seed);
  } else {
    Fields m(*manifests, where + ".corpus.manifests");
    const auto train = m.get<std::string>("train");
    const auto val = m.get<std::string>("val");
    const auto test = m.get<std::string>("test");
    m.finish();
    if (!train || !val || !test) throw ConfigError(where + ".corpus.manifests needs train, val and test");
    auto split = load_corpus(resolve(base, *train), resolve(base, *val), resolve(base, *test));
    if (split.train.domain.name != d.spec.name) {
      throw ConfigError(fmt::format("{}: manifests describe domain {}, not {}", where,
                                    to_string(split.train.domain.name), to_string(d.spec.name)));
    }
    d.corpus = std::make_shared<const CorpusSplit>(std::move(split));
  }
  f.finish();
  return d;
}

std::array<double, kConditionCount> ratios_from(const json& j, const std::string& where) {
  std::array<double, kConditionCount> out{};
  if (j.is_number()) {
    out.fill(j.get<double>());
    return out;
  }
  if (!j.is_object()) throw ConfigError(where + " must be a number or an object keyed by condition");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError(where + "." + key + " must be a number");
    out[condition_index(condition_from_name(key))] = value.get<double>();
  }
  return out;
}

GenerationConfig generation_from(const json& j, const std::filesystem::path& base) {
  Fields f(j, "generation");
  GenerationConfig g;
  f.read("sample_rate", g.sample_rate);
  f.read("clip_samples", g.clip_samples);
  if (const json* r = f.child("degenerate_ratio")) g.degenerate_ratio = ratios_from(*r, "generation.degenerate_ratio");
  f.read("degenerate_all_match_fraction", g.degenerate_all_match_fraction);
  f.read("exclude_ambiguous_energy", g.exclude_ambiguous_energy);
  if (auto r = f.get<std::vector<double>>("snr_range_energy_conditioned")) {
    g.snr_range_energy_conditioned = range_from(*r, "generation.snr_range_energy_conditioned");
  }
  f.read("energy_ambiguity_db", g.energy_ambiguity_db);
  if (auto r = f.get<std::vector<double>>("overlap")) g.overlap = range_from(*r, "generation.overlap");
  f.read("max_order", g.max_order);
  f.read("max_retries", g.max_retries);
  if (auto p = f.get<std::string>("rir_cache_dir")) g.rir_cache_dir = resolve(base, *p);
  const json* domains = f.child("domains");
  if (!domains || !domains->is_array() || domains->empty()) {
    throw ConfigError("generation.domains must be a non-empty array");
  }
  for (std::size_t i = 0; i < domains->size(); ++i) {
    g.domains.push_back(domain_from((*domains)[i], base, g.sample_rate, i));
  }
  f.finish();
  g.resolve();
  g.validate();
  return g;
}

TrainConfig train_from(const json& j) {
  Fields f(j, "train");
  TrainConfig t;
  f.read("batch_size", t.batch_size);
  f.read("initial_lr", t.initial_lr);
  f.read("lr_halving_period", t.lr_halving_period);
  f.read("epochs", t.epochs);
  f.read("epoch_size", t.epoch_size);
  if (auto o = f.get<std::string>("objective")) t.objective = objective_from_string(*o);
  f.read("seed", t.seed);
  f.read("clip_norm", t.clip_norm);
  f.read("adam_beta1", t.adam_beta1);
  f.read("adam_beta2", t.adam_beta2);
  f.read("adam_eps", t.adam_eps);
  if (auto n = f.get<std::size_t>("fixed_mixtures")) t.fixed_mixtures = *n;
  f.read("max_steps", t.max_steps);
  f.read("validation_size", t.validation_size);
  if (auto vs = f.get<std::vector<std::string>>("validation_concepts")) {
    for (const auto& v : *vs) t.validation_concepts.push_back(concept_from_name(v));
  }
  f.read("workers", t.workers);
  f.read("log_every", t.log_every);
  f.finish();
  return t;
}

EvalSpec eval_from(const json& j) {
  Fields f(j, "eval");
  EvalSpec e;
  if (auto cs = f.get<std::vector<std::string>>("concepts")) {
    for (const auto& v : *cs) e.concepts.push_back(concept_from_name(v));
  }
  f.read("size", e.size);
  f.read("seed", e.seed);
  if (auto s = f.get<std::string>("split")) e.split = partition_from_string(*s);
  if (const json* r = f.child("degenerate_ratio")) e.degenerate_ratio = ratios_from(*r, "eval.degenerate_ratio");
  f.finish();
  if (e.size == 0) throw ConfigError("eval.size must be positive");
  return e;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string median_text(const std::optional<double>& m) {
  if (!m) return "";
  if (std::isinf(*m)) return *m > 0 ? "inf" : "-inf";
  return fmt::format("{:.6f}", *m);
}

const PoolStats& pool_of(const ConceptReport& r, std::string_view pool) {
  if (pool == "all_match") return r.all_match;
  if (pool == "none_match") return r.none_match;
  return r.discriminative;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::shared_ptr<const CorpusSplit> toy_corpus_split(const ToyCorpusOptions& options, std::uint64_t split_seed) {
  const Manifest all = synth_toy_corpus(options);
  return std::make_shared<const CorpusSplit>(split_speakers_by_gender(all, {8, 1, 1}, split_seed));
}

std::string ExperimentConfig::hash() const {
  ContentHash h;
  h.add(std::string_view(document.dump()));
  return h.hex();
}

std::vector<Concept> ExperimentConfig::eval_concepts() const {
  if (!eval.concepts.empty()) return eval.concepts;
  std::vector<Concept> out;
  for (Concept v : kAllConcepts) {
    for (const auto& d : train.generation.domains) {
      const auto it = d.condition_priors.find(v);
      if (d.prior > 0.0 && it != d.condition_priors.end() && it->second > 0.0) {
        out.push_back(v);
        break;
      }
    }
  }
  return out;
}

GenerationConfig ExperimentConfig::eval_generation() const {
  GenerationConfig g = train.generation;
  if (eval.degenerate_ratio) g.degenerate_ratio = *eval.degenerate_ratio;
  return g;
}

ExperimentConfig parse_experiment(const json& input, const std::filesystem::path& base_dir) {
  // Run directories hold a copy stamped with its hash; the stamp is not part of the config.
  json document = input;
  if (document.is_object()) document.erase("config_hash");
  Fields f(document, "experiment");
  const auto version = f.get<int>("schema_version");
  if (version != kExperimentSchemaVersion) {
    throw ConfigError(fmt::format("experiment: schema_version must be {}", kExperimentSchemaVersion));
  }
  ExperimentConfig c;
  c.document = document;
  c.base_dir = base_dir;
  c.name = f.get<std::string>("name").value_or("experiment");
  if (const json* m = f.child("model")) c.model = m->get<ModelConfig>();
  c.model.validate();
  const json* train = f.child("train");
  c.train = train ? train_from(*train) : TrainConfig{};
  const json* generation = f.child("generation");
  if (!generation) throw ConfigError("experiment: 'generation' is required");
  c.train.generation = generation_from(*generation, base_dir);
  c.train.validate(c.model);
  if (const json* e = f.child("eval")) c.eval = eval_from(*e);
  if (const json* s = f.child("sweep")) {
    Fields sf(*s, "sweep");
    SweepSpec spec;
    spec.path = sf.get<std::string>("path").value_or("");
    if (const json* values = sf.child("values"); values && values->is_array()) {
      spec.values.assign(values->begin(), values->end());
    }
    sf.finish();
    if (spec.path.empty()) throw ConfigError("sweep.path is required");
    if (spec.values.empty()) throw ConfigError("sweep.values must be a non-empty array");
    c.sweep = std::move(spec);
  }
  std::filesystem::path out = f.get<std::string>("output_dir").value_or("runs/" + c.name);
  if (out.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) out = std::filesystem::path(root) / out;
  }
  c.output_dir = out;
  f.finish();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  json document;
  try {
    document = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_experiment(document, path.parent_path());
}

json apply_override(json document, const std::string& path, const json& value) {
  try {
    const json::json_pointer ptr(path);
    if (!ptr.empty() && !document.contains(ptr.parent_pointer())) {
      throw ConfigError("override path '" + path + "' has no parent in the document");
    }
    document[ptr] = value;
  } catch (const json::exception& e) {
    throw ConfigError("bad override path '" + path + "': " + e.what());
  }
  return document;
}

std::vector<EpochSummary> run_training(const ExperimentConfig& config) {
  std::filesystem::create_directories(config.output_dir);
  json stamped = config.document;
  stamped["config_hash"] = config.hash();
  write_text(config.output_dir / "config.json", stamped.dump(2) + "\n");
  Trainer trainer(config.model, config.train, config.output_dir / "train");
  return trainer.run();
}

std::vector<MixtureSample> build_eval_set(const ExperimentConfig& config, Concept v) {
  return make_eval_set(config.eval_generation(), v, config.eval.size, config.eval.seed, config.eval.split,
                       config.train.workers);
}

EvalReport run_evaluation(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                          const std::vector<Concept>& concepts) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto model = model_from_checkpoint<float>(ckpt);
  std::vector<MixtureSample> set;
  for (Concept v : concepts.empty() ? config.eval_concepts() : concepts) {
    auto part = build_eval_set(config, v);
    std::move(part.begin(), part.end(), std::back_inserter(set));
  }
  EvalReport report = model.config().conditioned ? evaluate_conditional(model, set) : evaluate_pit_oracle(model, set);
  report.checkpoint_id = checkpoint_id(checkpoint);
  report.eval_seed = config.eval.seed;
  report.config_hash = config.hash();
  return report;
}

std::string sweep_csv(const std::vector<SweepPoint>& points, const std::vector<Concept>& concepts,
                      const std::string& config_hash) {
  std::string out = "value,concept,pool,median,count,infinite,status,config_hash\n";
  for (const auto& p : points) {
    for (Concept v : concepts) {
      for (const char* pool : kPoolNames) {
        std::string median;
        std::size_t count = 0;
        std::size_t infinite = 0;
        std::string status = p.error.empty() ? "ok" : "failed";
        if (p.report) {
          if (const auto* r = p.report->find(v)) {
            const auto& s = pool_of(*r, pool);
            median = median_text(s.median);
            count = s.count;
            infinite = s.infinite;
          }
        }
        out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(p.value.dump()), concept_name(v), pool, median,
                           count, infinite, status, config_hash);
      }
    }
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::vector<SweepRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = csv_split(line);
    if (f.size() < 4) throw DataError("sweep csv: malformed line '" + line + "'");
    SweepRow r{f[0], f[1], f[2], std::nullopt};
    if (f[3] == "inf") r.median = HUGE_VAL;
    else if (f[3] == "-inf") r.median = -HUGE_VAL;
    else if (!f[3].empty()) r.median = std::stod(f[3]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_sweep_svg(const std::vector<SweepRow>& rows, const std::vector<std::string>& pools,
                             const std::string& title) {
  constexpr double kWidth = 720;
  constexpr double kHeight = 420;
  constexpr double kLeft = 70;
  constexpr double kRight = 190;
  constexpr double kTop = 40;
  constexpr double kBottom = 60;
  constexpr std::array<const char*, 8> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                               "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::vector<std::string> xs;
  std::vector<std::pair<std::string, std::string>> series;  // (concept, pool)
  double lo = HUGE_VAL;
  double hi = -HUGE_VAL;
  for (const auto& r : rows) {
    if (std::find(pools.begin(), pools.end(), r.pool) == pools.end()) continue;
    if (std::find(xs.begin(), xs.end(), r.value) == xs.end()) xs.push_back(r.value);
    const std::pair<std::string, std::string> key{r.query, r.pool};
    if (std::find(series.begin(), series.end(), key) == series.end()) series.push_back(key);
    if (r.median && std::isfinite(*r.median)) {
      lo = std::min(lo, *r.median);
      hi = std::max(hi, *r.median);
    }
  }
  if (!(lo <= hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  const double pad = std::max(1.0, 0.1 * (hi - lo));
  lo -= pad;
  hi += pad;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto x_at = [&](std::size_t i) {
    return xs.size() <= 1 ? kLeft + plot_w / 2 : kLeft + plot_w * double(i) / double(xs.size() - 1);
  };
  auto y_at = [&](double v) {
    v = std::clamp(v, lo, hi);  // infinities pin to the frame
    return kTop + plot_h * (hi - v) / (hi - lo);
  };
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight);
  svg += fmt::format("<text x=\"{}\" y=\"24\" font-size=\"15\">{}</text>\n", kLeft, title);
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, plot_w, plot_h);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const double y = y_at(v);
    svg += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                       kLeft + plot_w, y);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n", kLeft - 6, y + 4, v);
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x_at(i),
                       kTop + plot_h + 18, xs[i]);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">sweep value</text>\n", kLeft + plot_w / 2,
                     kHeight - 14);
  svg += fmt::format(
      "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">median SI-SDR (dB)</text>\n",
      kTop + plot_h / 2, kTop + plot_h / 2);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % kColors.size()];
    std::string points;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (const auto& r : rows) {
        if (r.value == xs[i] && r.query == series[s].first && r.pool == series[s].second && r.median) {
          points += fmt::format("{:.1f},{:.1f} ", x_at(i), y_at(*r.median));
          svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", x_at(i), y_at(*r.median),
                             color);
        }
      }
    }
    if (!points.empty()) {
      svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", points, color);
    }
    const double ly = kTop + 14 + 18 * double(s);
    svg += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       kWidth - kRight + 14, ly, kWidth - kRight + 34, ly, color);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\">{} {}</text>\n", kWidth - kRight + 40, ly + 4, series[s].first,
                       series[s].second);
  }
  svg += "</svg>\n";
  return svg;
}

void render_plots(const std::filesystem::path& csv_path, const std::filesystem::path& out_dir) {
  const auto rows = parse_sweep_csv(read_text(csv_path));
  write_text(out_dir / "plot_discriminative.svg",
             render_sweep_svg(rows, {"discriminative"}, "Discriminative queries"));
  write_text(out_dir / "plot_degenerate.svg",
             render_sweep_svg(rows, {"all_match", "none_match"}, "Non-discriminative queries"));
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config) {
  if (!config.sweep) throw ConfigError("sweep: the config has no sweep axis");
  std::vector<SweepPoint> points;
  std::vector<std::pair<std::string, EvalReport>> table_rows;
  for (std::size_t i = 0; i < config.sweep->values.size(); ++i) {
    SweepPoint point;
    point.value = config.sweep->values[i];
    try {
      json doc = apply_override(config.document, config.sweep->path, point.value);
      doc.erase("sweep");
      doc["output_dir"] = (config.output_dir / fmt::format("point_{:02d}", i)).string();
      const ExperimentConfig sub = parse_experiment(doc, config.base_dir);
      run_training(sub);
      point.report = run_evaluation(sub, sub.output_dir / "train" / "checkpoints" / "latest.ckpt");
      write_text(sub.output_dir / "report.json", point.report->to_json() + "\n");
      table_rows.emplace_back(point.value.dump(), *point.report);
    } catch (const std::exception& e) {
      point.error = e.what();
      write_text(config.output_dir / fmt::format("point_{:02d}", i) / "error.txt", point.error + "\n");
    }
    points.push_back(std::move(point));
  }
  const auto csv = sweep_csv(points, config.eval_concepts(), config.hash());
  write_text(config.output_dir / "summary.csv", csv);
  write_text(config.output_dir / "summary.txt", format_table(table_rows));
  render_plots(config.output_dir / "summary.csv", config.output_dir);
  return points;
}

}  // namespace hetsep
