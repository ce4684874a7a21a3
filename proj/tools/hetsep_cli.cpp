// hetsep command-line tool.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hetsep/checkpoint.hpp"
#include "hetsep/corpus.hpp"
#include "hetsep/errors.hpp"
#include "hetsep/experiment.hpp"

namespace fs = std::filesystem;
using namespace hetsep;

namespace {

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("{}: '{}' is not a number", what, item));
    }
  }
  if (out.size() != expected) throw ConfigError(fmt::format("{}: expected {} comma-separated values", what, expected));
  return out;
}

std::vector<Concept> parse_concepts(const std::string& text) {
  std::vector<Concept> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(concept_from_name(item));
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) path = fs::path(root) / path;
  }
  return path;
}

void save_split(const CorpusSplit& split, const fs::path& dir) {
  save_manifest(split.train, dir / "train.jsonl");
  save_manifest(split.val, dir / "val.jsonl");
  save_manifest(split.test, dir / "test.jsonl");
  for (const Manifest* m : {&split.train, &split.val, &split.test}) {
    spdlog::info("{}: {} records, {} speakers", to_string(m->partition), m->records.size(), m->speakers().size());
  }
}

struct SynthArgs {
  std::string out = "corpus";
  std::uint64_t seed = 0;
  int speakers = 40;
  int records = 8;
  std::string language_mix = "53,15,16,16";
  double female_fraction = 0.5;
  int sample_rate = kDefaultSampleRate;
  bool no_audio = false;
};

void cmd_synth_corpus(const SynthArgs& a) {
  ToyCorpusOptions o;
  o.seed = a.seed;
  o.n_speakers = a.speakers;
  o.records_per_speaker = a.records;
  o.female_fraction = a.female_fraction;
  o.sample_rate = a.sample_rate;
  const auto mix = parse_numbers(a.language_mix, 4, "--language-mix");
  std::copy(mix.begin(), mix.end(), o.language_mix.weights.begin());
  Manifest all = synth_toy_corpus(o);
  const fs::path dir = output_path(a.out);
  fs::create_directories(dir);
  if (!a.no_audio) materialize_toy_audio(all, dir);
  all.base_dir = dir;
  save_manifest(all, dir / "all.jsonl");
  save_split(split_speakers_by_gender(all, {8, 1, 1}, a.seed), dir);
  std::cout << dir.string() << '\n';
}

struct PrepareArgs {
  std::string input;
  std::string out;
  std::string ratios = "8,1,1";
  std::uint64_t seed = 0;
  bool by_gender = false;
};

void cmd_prepare_manifest(const PrepareArgs& a) {
  Manifest all = load_manifest(a.input);
  validate_manifest(all);
  const auto r = parse_numbers(a.ratios, 3, "--ratios");
  const std::array<double, 3> ratios{r[0], r[1], r[2]};
  CorpusSplit split = a.by_gender ? split_speakers_by_gender(all, ratios, a.seed) : split_speakers(all, ratios, a.seed);
  check_speaker_disjoint(split);
  const fs::path dir = a.out.empty() ? fs::path(a.input).parent_path() : output_path(a.out);
  save_split(split, dir);
  for (const Manifest* m : {&split.train, &split.val, &split.test}) {
    for (const auto& issue : check_expected_counts(*m)) spdlog::warn("{}", issue);
  }
}

void cmd_train(const std::string& config_path) {
  const ExperimentConfig config = load_experiment(config_path);
  spdlog::info("training '{}' (config {}) into {}", config.name, config.hash(), config.output_dir.string());
  spdlog::info("model parameters: {}", count_parameters(config.model));
  const auto summaries = run_training(config);
  for (const auto& s : summaries) spdlog::info("epoch {} step {} loss {:.5f} lr {:.2e}", s.epoch, s.step, s.loss, s.lr);
  std::cout << (config.output_dir / "train" / "checkpoints" / "latest.ckpt").string() << '\n';
}

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string concepts;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  const ExperimentConfig config = load_experiment(a.config);
  if (!fs::exists(a.checkpoint)) throw IoError("checkpoint not found: " + a.checkpoint);
  const EvalReport report = run_evaluation(config, a.checkpoint, parse_concepts(a.concepts));
  const fs::path dir = a.out.empty() ? config.output_dir / "eval" : output_path(a.out);
  write_file(dir / "report.json", report.to_json() + "\n");
  const std::string table = format_table({{config.name, report}});
  write_file(dir / "report.txt", table);
  std::cout << table;
}

void cmd_sweep(const std::string& config_path) {
  const ExperimentConfig config = load_experiment(config_path);
  const auto points = run_sweep(config);
  std::size_t failed = 0;
  for (const auto& p : points) {
    if (!p.error.empty()) {
      ++failed;
      spdlog::error("sweep value {} failed: {}", p.value.dump(), p.error);
    }
  }
  std::cout << (config.output_dir / "summary.csv").string() << '\n';
  if (failed == points.size()) throw DataError("every sweep point failed");
}

void cmd_render_plots(const std::string& csv, const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(csv).parent_path() : output_path(out);
  render_plots(csv, dir);
  std::cout << (dir / "plot_discriminative.svg").string() << '\n' << (dir / "plot_degenerate.svg").string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous-condition source separation"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-corpus", "Synthesize the toy corpus and its 8:1:1 speaker split");
  synth_cmd->add_option("--out", synth.out, "Output directory")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Corpus seed")->capture_default_str();
  synth_cmd->add_option("--speakers", synth.speakers, "Number of speakers")->capture_default_str();
  synth_cmd->add_option("--records", synth.records, "Recordings per speaker")->capture_default_str();
  synth_cmd->add_option("--language-mix", synth.language_mix, "en,fr,de,es proportions")->capture_default_str();
  synth_cmd->add_option("--female-fraction", synth.female_fraction, "Share of female speakers")->capture_default_str();
  synth_cmd->add_option("--sample-rate", synth.sample_rate, "Sample rate in Hz")->capture_default_str();
  synth_cmd->add_flag("--no-audio", synth.no_audio, "Keep synthesis specs instead of writing WAV files");

  PrepareArgs prep;
  auto* prep_cmd = app.add_subcommand("prepare-manifest", "Validate a manifest and split it by speaker");
  prep_cmd->add_option("input", prep.input, "Manifest covering every recording")->required();
  prep_cmd->add_option("--out", prep.out, "Output directory (default: next to the input)");
  prep_cmd->add_option("--ratios", prep.ratios, "train,val,test speaker ratios")->capture_default_str();
  prep_cmd->add_option("--seed", prep.seed, "Split seed")->capture_default_str();
  prep_cmd->add_flag("--by-gender", prep.by_gender, "Stratify the split by gender");

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train a model from an experiment config");
  train_cmd->add_option("config", train_config, "Experiment config (JSON)")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the configured eval sets");
  eval_cmd->add_option("config", eval.config, "Experiment config (JSON)")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--concepts", eval.concepts, "Comma-separated concept subset, e.g. E_HIGH,G_FEMALE");
  eval_cmd->add_option("--out", eval.out, "Report directory (default: <output_dir>/eval)");

  std::string sweep_config;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate one model per sweep value");
  sweep_cmd->add_option("config", sweep_config, "Experiment config with a sweep axis")->required();

  std::string plot_csv;
  std::string plot_out;
  auto* plot_cmd = app.add_subcommand("render-plots", "Render SVG plots from a sweep summary CSV");
  plot_cmd->add_option("csv", plot_csv, "summary.csv from a sweep")->required();
  plot_cmd->add_option("--out", plot_out, "Output directory (default: next to the CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }
  spdlog::set_level(quiet ? spdlog::level::err : spdlog::level::info);

  try {
    if (*synth_cmd) cmd_synth_corpus(synth);
    else if (*prep_cmd) cmd_prepare_manifest(prep);
    else if (*train_cmd) cmd_train(train_config);
    else if (*eval_cmd) cmd_eval(eval);
    else if (*sweep_cmd) cmd_sweep(sweep_config);
    else if (*plot_cmd) cmd_render_plots(plot_csv, plot_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: data: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
