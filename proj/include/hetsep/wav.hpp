#pragma once

#include <filesystem>

#include "hetsep/signal.hpp"

namespace hetsep {

enum class WavFormat { kPcm16, kFloat32 };

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.
/// Integer samples are normalized to [-1, 1). Multi-channel files keep channel 0.
Waveform read_wav(const std::filesystem::path& path);

/// Header-only probe: returns (frames, sample_rate).
std::pair<std::size_t, int> probe_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavFormat format = WavFormat::kFloat32);

/// Band-limited resampling by Hann-windowed sinc interpolation.
Waveform resample(const Waveform& w, int target_rate);

}  // namespace hetsep
