#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "hetsep/conditions.hpp"
#include "hetsep/errors.hpp"

using namespace hetsep;

TEST(Vocabulary, CanonicalOrderAndNames) {
  EXPECT_EQ(vocabulary_signature(), "E_HIGH,E_LOW,G_FEMALE,G_MALE,S_NEAR,S_FAR,L_EN,L_FR,L_DE,L_ES");
  for (Concept v : kAllConcepts) EXPECT_EQ(concept_from_name(concept_name(v)), v);
  EXPECT_THROW(concept_from_name("E_MEDIUM"), ConfigError);
}

TEST(Vocabulary, ConceptsPartitionConditions) {
  std::set<Concept> seen;
  for (Condition c : kAllConditions) {
    for (Concept v : concepts_of(c)) {
      EXPECT_EQ(condition_of(v), c);
      EXPECT_TRUE(seen.insert(v).second);
    }
    EXPECT_EQ(condition_from_name(condition_name(c)), c);
  }
  EXPECT_EQ(seen.size(), kVocabularySize);
  EXPECT_EQ(concepts_of(Condition::kLanguage).size(), 4u);
}

TEST(OneHot, EncodeDecodeRoundTrip) {
  for (Concept v : kAllConcepts) {
    const auto c = encode_concept(v);
    EXPECT_TRUE(is_one_hot(c));
    EXPECT_EQ(c[concept_index(v)], 1);
    EXPECT_EQ(decode_concept(c), v);
  }
  ConditionVector two{};
  two[0] = two[3] = 1;
  EXPECT_FALSE(is_one_hot(two));
  EXPECT_THROW(decode_concept(two), ConfigError);
  EXPECT_THROW(decode_concept(ConditionVector{}), ConfigError);
}

TEST(Energy, LouderSourceIsHigh) {
  const std::vector<Waveform> s{Waveform({1, 1, 1}, 8000), Waveform({2, 2, 2}, 8000)};
  const auto labels = assign_energy_concepts(s);
  EXPECT_EQ(labels[0], EnergyLabel::kLow);
  EXPECT_EQ(labels[1], EnergyLabel::kHigh);
}

TEST(Energy, CloseLevelsAreAmbiguous) {
  // 0.5 dB apart with a 1 dB margin
  const double g = std::pow(10.0, 0.5 / 20);
  const std::vector<Waveform> s{Waveform({1, 1}, 8000), Waveform({g, g}, 8000)};
  for (auto l : assign_energy_concepts(s, 1.0)) EXPECT_EQ(l, EnergyLabel::kAmbiguous);
  EXPECT_EQ(assign_energy_concepts(s, 0.1)[1], EnergyLabel::kHigh);
  // exactly at the margin is still ambiguous
  const double h = std::pow(10.0, 1.0 / 20);
  const std::vector<Waveform> edge{Waveform({1, 1}, 8000), Waveform({h, h}, 8000)};
  EXPECT_EQ(assign_energy_concepts(edge, 1.0 + 1e-9)[0], EnergyLabel::kAmbiguous);
}

TEST(Submix, RoutesMatchingSources) {
  const std::vector<Waveform> s{Waveform({1, 0}, 8000), Waveform({0, 2}, 8000)};
  ConceptProfile a, b;
  a.set(Concept::kFemale);
  b.set(Concept::kMale);
  const std::vector<ConceptProfile> p{a, b};
  const auto out = target_submix(s, p, Concept::kMale);
  EXPECT_EQ(out.target.samples, (std::vector<double>{0, 2}));
  EXPECT_EQ(out.other.samples, (std::vector<double>{1, 0}));
  EXPECT_EQ(out.degeneracy, Degeneracy::kNone);
}

TEST(Submix, DegenerateQueries) {
  const std::vector<Waveform> s{Waveform({1, 0}, 8000), Waveform({0, 2}, 8000)};
  ConceptProfile a;
  a.set(Concept::kMale);
  const std::vector<ConceptProfile> p{a, a};
  const auto all = target_submix(s, p, Concept::kMale);
  EXPECT_EQ(all.degeneracy, Degeneracy::kAllMatch);
  EXPECT_EQ(all.target.samples, (std::vector<double>{1, 2}));
  EXPECT_EQ(all.other.samples, (std::vector<double>{0, 0}));
  const auto none = target_submix(s, p, Concept::kFemale);
  EXPECT_EQ(none.degeneracy, Degeneracy::kNoneMatch);
  EXPECT_EQ(none.other.samples, (std::vector<double>{1, 2}));
}

TEST(Submix, UndefinedConditionIsAnError) {
  const std::vector<Waveform> s{Waveform({1}, 8000), Waveform({1}, 8000)};
  ConceptProfile a;
  a.set(Concept::kMale);
  const std::vector<ConceptProfile> p{a, a};
  EXPECT_THROW(target_submix(s, p, Concept::kEnglish), DataError);
}

TEST(Profile, SetReplacesWithinCondition) {
  ConceptProfile p;
  p.set(Concept::kEnglish);
  p.set(Concept::kGerman);
  EXPECT_EQ(p.get(Condition::kLanguage), Concept::kGerman);
  p.clear(Condition::kLanguage);
  EXPECT_FALSE(p.defines(Condition::kLanguage));
}
