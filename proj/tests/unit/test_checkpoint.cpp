#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hetsep/checkpoint.hpp"
#include "hetsep/config_io.hpp"
#include "hetsep/errors.hpp"

using namespace hetsep;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hetsep_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresModel) {
  Separator<float> m(ModelConfig::tiny(), 3);
  const auto path = temp_file("a.ckpt");
  save_checkpoint(make_checkpoint(m, 12, 2), path);
  const auto ckpt = load_checkpoint(path);
  EXPECT_EQ(ckpt.step, 12u);
  EXPECT_EQ(ckpt.epoch, 2u);
  EXPECT_EQ(ckpt.model, ModelConfig::tiny());
  const auto back = model_from_checkpoint<float>(ckpt);
  EXPECT_TRUE(std::equal(m.parameters().begin(), m.parameters().end(), back.parameters().begin()));
  const Waveform x(std::vector<double>(900, 0.1), 8000);
  EXPECT_EQ(m.forward(x, Concept::kMale).first, back.forward(x, Concept::kMale).first);
  EXPECT_EQ(checkpoint_id(path), checkpoint_id(path));
}

TEST(Checkpoint, CorruptionIsDetected) {
  Separator<float> m(ModelConfig::tiny(), 3);
  const auto path = temp_file("b.ckpt");
  save_checkpoint(make_checkpoint(m), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-16, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  fs::resize_file(path, fs::file_size(path) / 2);
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::ofstream(temp_file("c.ckpt")) << "nope";
  EXPECT_THROW(load_checkpoint(temp_file("c.ckpt")), DataError);
  EXPECT_THROW(load_checkpoint(temp_file("missing.ckpt")), IoError);
}

TEST(Checkpoint, VocabularyMismatchIsAConfigError) {
  Separator<float> m(ModelConfig::tiny(), 3);
  auto ckpt = make_checkpoint(m);
  ckpt.vocabulary = "E_LOW,E_HIGH,G_FEMALE,G_MALE,S_NEAR,S_FAR,L_EN,L_FR,L_DE,L_ES";
  const auto path = temp_file("d.ckpt");
  save_checkpoint(ckpt, path);
  EXPECT_THROW(load_checkpoint(path), ConfigError);
}

TEST(Checkpoint, RestoreRejectsOtherArchitecture) {
  Separator<float> m(ModelConfig::tiny(), 3);
  auto other = ModelConfig::tiny();
  other.num_blocks = 2;
  Separator<float> n(other);
  EXPECT_THROW(restore_parameters(n, make_checkpoint(m)), ConfigError);
}

TEST(ConfigIo, ModelConfigJsonRoundTripAndStrictKeys) {
  const auto c = ModelConfig::tiny();
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<ModelConfig>(), c);
  auto bad = j;
  bad["blocks"] = 3;
  EXPECT_THROW(bad.get<ModelConfig>(), ConfigError);
}
