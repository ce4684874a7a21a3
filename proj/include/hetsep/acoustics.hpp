#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hetsep/rng.hpp"
#include "hetsep/signal.hpp"

namespace hetsep {

inline constexpr double kSpeedOfSound = 343.0;       // m/s
inline constexpr double kMicrophoneHeight = 1.5;     // m
inline constexpr int kDefaultReflectionOrder = 17;
inline constexpr double kDefaultHighpassHz = 20.0;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Point3&) const = default;
};

double distance(const Point3& a, const Point3& b) noexcept;

/// Closed interval used for uniform sampling.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }
  bool operator==(const Range&) const = default;
};

struct RoomSpec {
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  double rt60 = 0.0;
  Point3 mic;

  double volume() const noexcept { return length * width * height; }
  double surface() const noexcept {
    return 2.0 * (length * width + length * height + width * height);
  }
  bool inside(const Point3& p) const noexcept;
};

enum class FieldClass { kNear, kFar };

std::string to_string(FieldClass f);
FieldClass field_class_from_string(const std::string& s);

struct SourcePlacement {
  FieldClass field = FieldClass::kNear;
  double distance = 0.0;  // horizontal mic-to-source distance
  double azimuth = 0.0;
  double source_height = 0.0;
  Point3 position;
};

/// Per-domain room and placement sampling ranges.
struct RoomRanges {
  Range height;
  Range length;
  Range width;
  Range rt60;
  Range source_height;
  Range far_distance;
  Range near_distance;

  const Range& distance_for(FieldClass f) const noexcept {
    return f == FieldClass::kNear ? near_distance : far_distance;
  }
};

RoomRanges slib_room_ranges();
RoomRanges svox_room_ranges();

struct Rir {
  std::vector<double> taps;
  int sample_rate = kDefaultSampleRate;
};

struct Absorption {
  double coefficient = 0.0;
  bool clamped = false;
  std::optional<std::string> warning;
};

/// Uniform wall absorption from Sabine's formula, 0.161 V / (S rt60), clamped to 0.99.
Absorption sabine_absorption(const RoomSpec& room);

/// Reverberation time of an RIR from its Schroeder decay curve: a line fitted between -5 and
/// -25 dB below the level at `onset`, extrapolated to -60 dB. NaN when the curve is too short.
double decay_time(const Rir& rir, std::size_t onset);

/// Image-source RIR whose measured decay_time matches the room's rt60. Starts from Sabine's
/// absorption and corrects it for the shoebox geometry over a few refinement steps.
Rir image_source_rir(const RoomSpec& room, const Point3& source, int max_order = kDefaultReflectionOrder,
                     int sample_rate = kDefaultSampleRate);

/// Image-source RIR with an explicit energy absorption coefficient in [0, 1].
/// Each image of k wall hits contributes (1 - absorption)^(k/2) / (4 pi d) at delay d / c,
/// realized as a Hann-windowed sinc fractional delay, followed by a high-pass filter.
Rir image_source_rir(const RoomSpec& room, const Point3& source, double absorption, int max_order,
                     int sample_rate, double highpass_hz = kDefaultHighpassHz);

/// Direct-path propagation delay from source to microphone, in samples.
double direct_path_delay(const RoomSpec& room, const Point3& source, int sample_rate);

/// Draws room dimensions and rt60 from the ranges; microphone at the floor-plan center, 1.5 m high.
RoomSpec sample_room(const RoomRanges& ranges, Rng& rng);

/// Uniform distance (per field class), azimuth and source height around the microphone.
/// Throws ConfigError after 100 consecutive out-of-room draws.
SourcePlacement place_source(const RoomSpec& room, FieldClass field, const RoomRanges& ranges, Rng& rng);

/// Linear convolution truncated to the input length.
Waveform spatialize(const Waveform& w, const Rir& rir);

/// Optional on-disk RIR store: raw float32 taps keyed by a content hash of the inputs.
class RirCache {
 public:
  explicit RirCache(std::filesystem::path dir);

  Rir get(const RoomSpec& room, const Point3& source, int max_order, int sample_rate);
  std::string key(const RoomSpec& room, const Point3& source, int max_order, int sample_rate) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace hetsep
