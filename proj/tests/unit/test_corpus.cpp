#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "hetsep/corpus.hpp"
#include "hetsep/errors.hpp"
#include "oracles.hpp"

using namespace hetsep;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("hetsep_corpus_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::set<std::string> speakers(const Manifest& m) {
  const auto v = m.speakers();
  return {v.begin(), v.end()};
}

}  // namespace

TEST(ToyCorpus, DeterministicInSeed) {
  ToyCorpusOptions o;
  o.n_speakers = 12;
  o.records_per_speaker = 3;
  const auto a = synth_toy_corpus(o);
  const auto b = synth_toy_corpus(o);
  EXPECT_EQ(a.records, b.records);
  o.seed = 1;
  EXPECT_NE(a.records, synth_toy_corpus(o).records);
  EXPECT_EQ(a.records.size(), 36u);
  EXPECT_EQ(a.partition, Partition::kAll);
}

TEST(ToyCorpus, GenderAndLanguageProportions) {
  ToyCorpusOptions o;
  o.n_speakers = 100;
  o.records_per_speaker = 1;
  const auto m = synth_toy_corpus(o);
  std::map<Gender, int> g;
  std::map<Language, int> l;
  for (const auto& r : m.records) {
    ++g[*r.gender];
    ++l[*r.language];
  }
  EXPECT_EQ(g[Gender::kFemale], 50);
  // 53/15/16/16 over 100 speakers
  EXPECT_NEAR(l[Language::kEnglish], 53, 1);
  EXPECT_NEAR(l[Language::kFrench], 15, 1);
  EXPECT_NEAR(l[Language::kGerman], 16, 1);
  EXPECT_NEAR(l[Language::kSpanish], 16, 1);
}

TEST(ToyVoice, RefRoundTrip) {
  ToyVoice v;
  v.f0 = 123.25;
  v.pitch_bounds = kMalePitch;
  v.language = Language::kGerman;
  v.seed = 99;
  const auto back = ToyVoice::from_ref(v.to_ref());
  EXPECT_EQ(back.to_ref(), v.to_ref());
  EXPECT_THROW(ToyVoice::from_ref("wav:nope"), DataError);
  EXPECT_THROW(ToyVoice::from_ref("toy:f0=1"), DataError);
}

TEST(ToyVoice, PitchFollowsGenderBand) {
  for (const auto& [f0, bounds] : {std::pair{110.0, kMalePitch}, std::pair{210.0, kFemalePitch}}) {
    ToyVoice v;
    v.f0 = f0;
    v.pitch_bounds = bounds;
    v.duration = 2.0;
    v.seed = 5;
    const auto w = render_toy_voice(v);
    ASSERT_EQ(w.size(), 16000u);
    // pick a voiced stretch with the most energy
    std::size_t best = 0;
    double best_e = -1;
    for (std::size_t s = 0; s + 800 < w.size(); s += 400) {
      const double e = energy(std::span(w.samples).subspan(s, 800));
      if (e > best_e) {
        best_e = e;
        best = s;
      }
    }
    const double pitch = oracle::autocorr_pitch(std::span(w.samples).subspan(best, 800), 8000, 70, 300);
    EXPECT_NEAR(pitch, f0, 0.08 * f0);
  }
}

TEST(ToyVoice, LanguageTemplatesOrderSpectralCentroid) {
  std::vector<double> centroids;
  for (Language l : {Language::kEnglish, Language::kFrench, Language::kGerman, Language::kSpanish}) {
    ToyVoice v;
    v.f0 = 150;
    v.pitch_bounds = {140, 160};
    v.language = l;
    v.duration = 1.0;
    v.seed = 3;
    const auto w = render_toy_voice(v);
    centroids.push_back(oracle::spectral_centroid(w.view(), 8000, 4096));
  }
  EXPECT_TRUE(std::is_sorted(centroids.begin(), centroids.end()));
}

TEST(Split, SpeakerDisjointAndStratified) {
  ToyCorpusOptions o;
  o.n_speakers = 40;
  o.records_per_speaker = 2;
  const auto split = split_speakers_by_gender(synth_toy_corpus(o), {8, 1, 1}, 3);
  EXPECT_NO_THROW(check_speaker_disjoint(split));
  EXPECT_EQ(speakers(split.train).size(), 32u);
  EXPECT_EQ(speakers(split.val).size(), 4u);
  EXPECT_EQ(speakers(split.test).size(), 4u);
  for (const Manifest* m : {&split.train, &split.val, &split.test}) {
    std::set<Gender> g;
    for (const auto& r : m->records) g.insert(*r.gender);
    EXPECT_EQ(g.size(), 2u);
  }
  EXPECT_EQ(split.get(Partition::kVal).partition, Partition::kVal);
}

TEST(Split, LeakIsDetected) {
  ToyCorpusOptions o;
  o.n_speakers = 10;
  o.records_per_speaker = 2;
  auto split = split_speakers(synth_toy_corpus(o), {8, 1, 1}, 0);
  split.test.records.push_back(split.train.records.front());
  EXPECT_THROW(check_speaker_disjoint(split), DataError);
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = temp_dir("manifest");
  ToyCorpusOptions o;
  o.n_speakers = 4;
  o.records_per_speaker = 2;
  const auto m = synth_toy_corpus(o);
  save_manifest(m, dir / "all.jsonl");
  const auto back = load_manifest(dir / "all.jsonl");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.domain.name, DomainName::kToy);
  EXPECT_EQ(back.base_dir, dir);
}

TEST(Manifest, BadRecordIsNamed) {
  const auto dir = temp_dir("bad");
  std::ofstream(dir / "m.jsonl") << R"({"schema_version":1,"domain":"WSJ","partition":"train"})" << "\n"
                                 << R"({"record_id":"r1","audio_ref":"a.wav","speaker_id":"s1","duration":2.0})"
                                 << "\n";
  try {
    validate_manifest(load_manifest(dir / "m.jsonl"));
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("r1"), std::string::npos);
  }
}

TEST(Manifest, MaterializedAudioMatchesSynthesis) {
  const auto dir = temp_dir("audio");
  ToyCorpusOptions o;
  o.n_speakers = 2;
  o.records_per_speaker = 1;
  o.duration = {4.0, 4.0};
  auto m = synth_toy_corpus(o);
  const auto synthetic = load_record_audio(m.records[0], {});
  materialize_toy_audio(m, dir);
  const auto loaded = load_record_audio(m.records[0], m.base_dir);
  ASSERT_EQ(loaded.size(), synthetic.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) EXPECT_EQ(loaded[i], double(float(synthetic[i])));
}

TEST(Crop, ShortAudioIsRejected) {
  Rng rng(0);
  EXPECT_THROW(crop(Waveform(10), 11, rng), DataError);
  const Waveform w({0, 1, 2, 3, 4}, 8000);
  const auto c = crop(w, 3, rng);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[1], c[0] + 1);
}

TEST(ExpectedCounts, KnownForRealCollectionsOnly) {
  EXPECT_TRUE(expected_counts(DomainName::kWsj, Partition::kTrain).has_value());
  EXPECT_FALSE(expected_counts(DomainName::kToy, Partition::kTrain).has_value());
}
