#include "hetsep/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hetsep/errors.hpp"

namespace hetsep {

using nlohmann::json;

double aggregate_median(std::span<const double> scores) {
  if (scores.empty()) throw DataError("aggregate_median: empty score list");
  std::vector<double> v(scores.begin(), scores.end());
  if (std::any_of(v.begin(), v.end(), [](double s) { return std::isnan(s); })) {
    throw DataError("aggregate_median: NaN score");
  }
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1];
  const double b = v[n / 2];
  if (std::isinf(a) && std::isinf(b) && a != b) {
    throw DataError("aggregate_median: midpoint of -inf and +inf is undefined");
  }
  if (std::isinf(a)) return a;
  if (std::isinf(b)) return b;
  return 0.5 * (a + b);
}

void PoolStats::finalize() {
  count = scores.size();
  infinite = std::size_t(std::count_if(scores.begin(), scores.end(), [](double s) { return std::isinf(s); }));
  median.reset();
  mean.reset();
  if (scores.empty()) return;
  median = aggregate_median(scores);
  double sum = 0.0;
  for (double s : scores) sum += s;
  mean = sum / double(scores.size());
}

const ConceptReport* EvalReport::find(Concept v) const {
  for (const auto& c : concepts) {
    if (c.query == v) return &c;
  }
  return nullptr;
}

namespace {

json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    throw DataError("eval report: bad number '" + s + "'");
  }
  return j.get<double>();
}

json pool_json(const PoolStats& p) {
  json scores = json::array();
  for (double s : p.scores) scores.push_back(number(s));
  json j{{"count", p.count}, {"infinite", p.infinite}, {"scores", std::move(scores)}};
  j["median"] = p.median ? number(*p.median) : json(nullptr);
  j["mean"] = p.mean ? number(*p.mean) : json(nullptr);
  return j;
}

PoolStats pool_from(const json& j) {
  PoolStats p;
  for (const auto& s : j.at("scores")) p.scores.push_back(number_from(s));
  p.finalize();
  return p;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return fmt::format("{:.2f}", *v);
}

ConceptReport& report_for(std::map<Concept, ConceptReport>& pools, Concept v) {
  auto [it, inserted] = pools.try_emplace(v);
  if (inserted) it->second.query = v;
  return it->second;
}

EvalReport assemble(std::string kind, std::map<Concept, ConceptReport> pools, std::span<const MixtureSample> set) {
  EvalReport report;
  report.kind = std::move(kind);
  if (!set.empty()) report.eval_seed = set.front().base_seed;
  for (auto& [v, r] : pools) {
    r.discriminative.finalize();
    r.all_match.finalize();
    r.none_match.finalize();
    r.improvement.finalize();
    if (r.excluded_degenerate > 0) {
      report.notes.push_back(fmt::format("{}: {} degenerate samples excluded (no defined zero-target slot)",
                                         concept_name(v), r.excluded_degenerate));
    }
    report.concepts.push_back(std::move(r));
  }
  return report;
}

}  // namespace

std::string EvalReport::to_json() const {
  json cs = json::array();
  for (const auto& c : concepts) {
    cs.push_back({{"concept", concept_name(c.query)},
                  {"discriminative", pool_json(c.discriminative)},
                  {"all_match", pool_json(c.all_match)},
                  {"none_match", pool_json(c.none_match)},
                  {"improvement", pool_json(c.improvement)},
                  {"excluded_degenerate", c.excluded_degenerate}});
  }
  json j{{"kind", kind},
         {"concepts", std::move(cs)},
         {"checkpoint_id", checkpoint_id},
         {"eval_seed", eval_seed},
         {"config_hash", config_hash},
         {"notes", notes}};
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
  EvalReport r;
  r.kind = j.at("kind").get<std::string>();
  for (const auto& c : j.at("concepts")) {
    ConceptReport cr;
    cr.query = concept_from_name(c.at("concept").get<std::string>());
    cr.discriminative = pool_from(c.at("discriminative"));
    cr.all_match = pool_from(c.at("all_match"));
    cr.none_match = pool_from(c.at("none_match"));
    cr.improvement = pool_from(c.at("improvement"));
    cr.excluded_degenerate = c.at("excluded_degenerate").get<std::size_t>();
    r.concepts.push_back(std::move(cr));
  }
  r.checkpoint_id = j.value("checkpoint_id", "");
  r.eval_seed = j.value("eval_seed", std::uint64_t{0});
  r.config_hash = j.value("config_hash", "");
  r.notes = j.value("notes", std::vector<std::string>{});
  return r;
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::vector<Concept> columns;
  bool degenerate = false;
  for (const auto& [label, report] : rows) {
    for (const auto& c : report.concepts) {
      if (std::find(columns.begin(), columns.end(), c.query) == columns.end()) columns.push_back(c.query);
      degenerate = degenerate || c.all_match.count > 0 || c.none_match.count > 0;
    }
  }
  std::sort(columns.begin(), columns.end());
  std::vector<std::string> header{"config"};
  for (Concept v : columns) header.emplace_back(concept_name(v));
  if (degenerate) {
    for (Concept v : columns) {
      header.push_back(fmt::format("{}[x]", concept_name(v)));
      header.push_back(fmt::format("{}[0]", concept_name(v)));
    }
  }
  std::vector<std::vector<std::string>> table{header};
  for (const auto& [label, report] : rows) {
    std::vector<std::string> line{label};
    for (Concept v : columns) {
      const auto* c = report.find(v);
      line.push_back(c ? cell(c->discriminative.median) : "-");
    }
    if (degenerate) {
      for (Concept v : columns) {
        const auto* c = report.find(v);
        line.push_back(c ? cell(c->all_match.median) : "-");
        line.push_back(c ? cell(c->none_match.median) : "-");
      }
    }
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : table) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t i = 0; i < table[r].size(); ++i) {
      if (i == 0) {
        out += fmt::format("{:<{}}", table[r][i], width[i]);
      } else {
        out += fmt::format("  {:>{}}", table[r][i], width[i]);
      }
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

double pit_oracle_score(const SeparatorOutput& out, const Waveform& target) {
  return std::max(si_sdr(out.first, target), si_sdr(out.second, target));
}

EvalReport evaluate_conditional(const Estimator& estimate, std::span<const MixtureSample> eval_set) {
  std::map<Concept, ConceptReport> pools;
  for (const auto& s : eval_set) {
    auto& r = report_for(pools, s.query);
    const SeparatorOutput out = estimate(s);
    switch (s.degeneracy) {
      case Degeneracy::kNone: {
        const double score = si_sdr(out.first, s.target);
        r.discriminative.scores.push_back(score);
        r.improvement.scores.push_back(score - si_sdr(s.mixture, s.target));
        break;
      }
      case Degeneracy::kAllMatch:
        r.all_match.scores.push_back(si_sdr(out.first, s.mixture));
        break;
      case Degeneracy::kNoneMatch:
        r.none_match.scores.push_back(si_sdr(out.second, s.mixture));
        break;
    }
  }
  return assemble("conditional", std::move(pools), eval_set);
}

EvalReport evaluate_pit_oracle(const Estimator& estimate, std::span<const MixtureSample> eval_set) {
  std::map<Concept, ConceptReport> pools;
  for (const auto& s : eval_set) {
    auto& r = report_for(pools, s.query);
    if (s.degeneracy != Degeneracy::kNone) {
      ++r.excluded_degenerate;
      continue;
    }
    const SeparatorOutput out = estimate(s);
    const double score = pit_oracle_score(out, s.target);
    r.discriminative.scores.push_back(score);
    r.improvement.scores.push_back(score - si_sdr(s.mixture, s.target));
  }
  return assemble("pit_oracle", std::move(pools), eval_set);
}

template <typename S>
EvalReport evaluate_conditional(const Separator<S>& model, std::span<const MixtureSample> eval_set) {
  const auto& c = model.config();
  if (!c.conditioned) throw ConfigError("evaluate_conditional: model is unconditional");
  if (std::size_t(c.vocab_size) != kVocabularySize) {
    throw ConfigError(fmt::format("evaluate_conditional: model vocabulary has {} concepts, eval set uses {}",
                                  c.vocab_size, kVocabularySize));
  }
  return evaluate_conditional([&](const MixtureSample& s) { return model.forward(s.mixture, s.condition); },
                              eval_set);
}

template <typename S>
EvalReport evaluate_pit_oracle(const Separator<S>& model, std::span<const MixtureSample> eval_set) {
  if (model.config().conditioned) throw ConfigError("evaluate_pit_oracle: model is conditioned");
  return evaluate_pit_oracle([&](const MixtureSample& s) { return model.forward_unconditional(s.mixture); },
                             eval_set);
}

template EvalReport evaluate_conditional<float>(const Separator<float>&, std::span<const MixtureSample>);
template EvalReport evaluate_conditional<double>(const Separator<double>&, std::span<const MixtureSample>);
template EvalReport evaluate_pit_oracle<float>(const Separator<float>&, std::span<const MixtureSample>);
template EvalReport evaluate_pit_oracle<double>(const Separator<double>&, std::span<const MixtureSample>);

}  // namespace hetsep
