#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "hetsep/errors.hpp"
#include "hetsep/wav.hpp"

using namespace hetsep;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / ("hetsep_wav_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

Waveform tone(double hz, int rate, std::size_t n) {
  Waveform w(n, rate);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 * std::sin(2 * std::numbers::pi * hz * double(i) / rate);
  return w;
}

}  // namespace

TEST(Wav, FloatRoundTripIsExactToSinglePrecision) {
  const auto path = temp_dir() / "f32.wav";
  const auto w = tone(440, 8000, 800);
  write_wav(path, w);
  const auto back = read_wav(path);
  ASSERT_EQ(back.size(), w.size());
  EXPECT_EQ(back.sample_rate, 8000);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(back[i], double(float(w[i])));
  EXPECT_EQ(probe_wav(path), std::make_pair(std::size_t(800), 8000));
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
  const auto path = temp_dir() / "i16.wav";
  const auto w = tone(300, 16000, 1000);
  write_wav(path, w, WavFormat::kPcm16);
  const auto back = read_wav(path);
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(back[i], w[i], 1.0 / 32768);
}

TEST(Wav, RejectsGarbage) {
  const auto path = temp_dir() / "junk.wav";
  std::ofstream(path) << "definitely not audio";
  EXPECT_THROW(read_wav(path), IoError);
  EXPECT_THROW(read_wav(temp_dir() / "missing.wav"), IoError);
}

TEST(Resample, PreservesInBandTone) {
  const auto w = tone(500, 16000, 16000);
  const auto r = resample(w, 8000);
  ASSERT_EQ(r.size(), 8000u);
  const auto expect = tone(500, 8000, 8000);
  for (std::size_t i = 200; i < 7800; ++i) EXPECT_NEAR(r[i], expect[i], 5e-3);
}

TEST(Resample, RemovesAboveNewNyquist) {
  const auto r = resample(tone(6000, 16000, 16000), 8000);
  double peak = 0;
  for (std::size_t i = 200; i < r.size() - 200; ++i) peak = std::max(peak, std::fabs(r[i]));
  EXPECT_LT(peak, 0.02);
}
