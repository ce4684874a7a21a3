#include "hetsep/acoustics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "hetsep/errors.hpp"

namespace hetsep {

double distance(const Point3& a, const Point3& b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool RoomSpec::inside(const Point3& p) const noexcept {
  return p.x > 0.0 && p.x < length && p.y > 0.0 && p.y < width && p.z > 0.0 && p.z < height;
}

std::string to_string(FieldClass f) { return f == FieldClass::kNear ? "near" : "far"; }

FieldClass field_class_from_string(const std::string& s) {
  if (s == "near") return FieldClass::kNear;
  if (s == "far") return FieldClass::kFar;
  throw ConfigError("unknown field class '" + s + "'");
}

RoomRanges slib_room_ranges() {
  return RoomRanges{.height = {2.6, 3.5},
                    .length = {9.0, 11.0},
                    .width = {9.0, 11.0},
                    .rt60 = {0.3, 0.6},
                    .source_height = {1.5, 2.0},
                    .far_distance = {1.7, 3.0},
                    .near_distance = {0.2, 0.6}};
}

RoomRanges svox_room_ranges() {
  return RoomRanges{.height = {2.75, 3.25},
                    .length = {8.0, 10.0},
                    .width = {8.0, 10.0},
                    .rt60 = {0.4, 0.6},
                    .source_height = {1.6, 1.9},
                    .far_distance = {1.5, 2.5},
                    .near_distance = {0.3, 0.5}};
}

Absorption sabine_absorption(const RoomSpec& room) {
  if (!(room.rt60 > 0.0)) throw ConfigError("sabine_absorption: rt60 must be positive");
  Absorption out;
  out.coefficient = 0.161 * room.volume() / (room.surface() * room.rt60);
  if (out.coefficient >= 1.0) {
    out.warning = "rt60 " + std::to_string(room.rt60) +
                  " s is too short for the room size; absorption clamped to 0.99";
    out.coefficient = 0.99;
    out.clamped = true;
  }
  return out;
}

double direct_path_delay(const RoomSpec& room, const Point3& source, int sample_rate) {
  return distance(room.mic, source) / kSpeedOfSound * sample_rate;
}

double decay_time(const Rir& rir, std::size_t onset) {
  if (onset >= rir.taps.size()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> edc(rir.taps.size() - onset);
  double acc = 0.0;
  for (std::size_t i = rir.taps.size(); i-- > onset;) {
    acc += rir.taps[i] * rir.taps[i];
    edc[i - onset] = acc;
  }
  if (!(acc > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  // least squares over the -5..-25 dB span
  double n = 0, st = 0, sd = 0, stt = 0, std_ = 0;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    const double level = 10.0 * std::log10(edc[i] / acc);
    if (level < -25.0) break;
    if (level > -5.0) continue;
    const double t = double(i) / rir.sample_rate;
    n += 1;
    st += t;
    sd += level;
    stt += t * t;
    std_ += t * level;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double slope = (n * std_ - st * sd) / (n * stt - st * st);
  return slope < 0.0 ? -60.0 / slope : std::numeric_limits<double>::quiet_NaN();
}

Rir image_source_rir(const RoomSpec& room, const Point3& source, int max_order, int sample_rate) {
  constexpr int kRefinements = 3;
  constexpr double kTolerance = 0.02;
  const auto onset = std::size_t(direct_path_delay(room, source, sample_rate));
  double absorption = sabine_absorption(room).coefficient;
  Rir rir = image_source_rir(room, source, absorption, max_order, sample_rate);
  for (int i = 0; i < kRefinements; ++i) {
    const double measured = decay_time(rir, onset);
    if (!std::isfinite(measured) || std::fabs(measured / room.rt60 - 1.0) < kTolerance) break;
    // Decay rate scales with -ln(1 - absorption) per reflection.
    const double rate = -std::log1p(-absorption) * measured / room.rt60;
    absorption = std::clamp(-std::expm1(-rate), 1e-4, 0.99);
    rir = image_source_rir(room, source, absorption, max_order, sample_rate);
  }
  return rir;
}

Rir image_source_rir(const RoomSpec& room, const Point3& source, double absorption, int max_order,
                     int sample_rate, double highpass_hz) {
  if (max_order < 0) throw ConfigError("image_source_rir: max_order must be >= 0");
  if (absorption < 0.0 || absorption > 1.0) throw ConfigError("image_source_rir: absorption outside [0, 1]");
  if (!room.inside(source)) throw ConfigError("image_source_rir: source outside the room");

  const double fs = sample_rate;
  const double reflection = std::sqrt(1.0 - absorption);
  const int window = 2 * int(std::lround(0.004 * fs));
  const double half_window = window / 2.0;
  const std::array<double, 3> dims{room.length, room.width, room.height};
  const std::array<double, 3> src{source.x, source.y, source.z};
  const std::array<double, 3> mic{room.mic.x, room.mic.y, room.mic.z};

  struct Image {
    double delay;
    double amplitude;
  };
  std::vector<Image> images;
  const int n = (max_order + 1) / 2 + 1;
  for (int mx = -n; mx <= n; ++mx) {
    for (int my = -n; my <= n; ++my) {
      for (int mz = -n; mz <= n; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          for (int j = 0; j <= 1; ++j) {
            for (int k = 0; k <= 1; ++k) {
              const std::array<int, 3> m{mx, my, mz};
              const std::array<int, 3> flip{q, j, k};
              int hits = 0;
              double d2 = 0.0;
              for (int a = 0; a < 3; ++a) {
                hits += std::abs(2 * m[a] - flip[a]);
                const double img = (1 - 2 * flip[a]) * src[a] + 2.0 * m[a] * dims[a];
                d2 += (img - mic[a]) * (img - mic[a]);
              }
              if (hits > max_order) continue;
              const double d = std::sqrt(d2);
              const double amp = std::pow(reflection, hits) / (4.0 * std::numbers::pi * d);
              if (hits > 0 && amp == 0.0) continue;
              images.push_back({d / kSpeedOfSound * fs, amp});
            }
          }
        }
      }
    }
  }

  double max_delay = 0.0;
  for (const auto& im : images) max_delay = std::max(max_delay, im.delay);
  Rir rir;
  rir.sample_rate = sample_rate;
  rir.taps.assign(std::size_t(std::ceil(max_delay + half_window)) + 1, 0.0);
  for (const auto& im : images) {
    const long first = std::max(0L, long(std::ceil(im.delay - half_window)));
    const long last = std::min(long(rir.taps.size()) - 1, long(std::floor(im.delay + half_window)));
    for (long t = first; t <= last; ++t) {
      const double offset = double(t) - im.delay;
      const double win = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * offset / window));
      const double sinc =
          offset == 0.0 ? 1.0 : std::sin(std::numbers::pi * offset) / (std::numbers::pi * offset);
      rir.taps[std::size_t(t)] += im.amplitude * win * sinc;
    }
  }

  if (highpass_hz > 0.0) {
    // Allen & Berkley DC-blocking recursion.
    const double w = 2.0 * std::numbers::pi * highpass_hz / fs;
    const double r1 = std::exp(-w);
    const double b1 = 2.0 * r1 * std::cos(w);
    const double b2 = -r1 * r1;
    const double a1 = -(1.0 + r1);
    double y0 = 0.0, y1 = 0.0, y2 = 0.0;
    for (double& tap : rir.taps) {
      y2 = y1;
      y1 = y0;
      y0 = b1 * y1 + b2 * y2 + tap;
      tap = y0 + a1 * y1 + r1 * y2;
    }
  }
  return rir;
}

RoomSpec sample_room(const RoomRanges& ranges, Rng& rng) {
  RoomSpec room;
  room.length = ranges.length.sample(rng);
  room.width = ranges.width.sample(rng);
  room.height = ranges.height.sample(rng);
  room.rt60 = ranges.rt60.sample(rng);
  room.mic = {room.length / 2.0, room.width / 2.0, kMicrophoneHeight};
  return room;
}

SourcePlacement place_source(const RoomSpec& room, FieldClass field, const RoomRanges& ranges, Rng& rng) {
  for (int attempt = 0; attempt <= 100; ++attempt) {
    SourcePlacement p;
    p.field = field;
    p.distance = ranges.distance_for(field).sample(rng);
    p.azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.source_height = ranges.source_height.sample(rng);
    p.position = {room.mic.x + p.distance * std::cos(p.azimuth),
                  room.mic.y + p.distance * std::sin(p.azimuth), p.source_height};
    if (room.inside(p.position)) return p;
  }
  throw ConfigError("place_source: more than 100 consecutive out-of-room draws; placement ranges do not fit the room");
}

Waveform spatialize(const Waveform& w, const Rir& rir) {
  if (w.sample_rate != rir.sample_rate) throw DataError("spatialize: sample-rate mismatch");
  Waveform out(w.size(), w.sample_rate);
  if (w.empty() || rir.taps.empty()) return out;
  if (rir.taps.size() <= 64) {
    for (std::size_t n = 0; n < w.size(); ++n) {
      double acc = 0.0;
      for (std::size_t k = 0; k < rir.taps.size() && k <= n; ++k) acc += rir.taps[k] * w[n - k];
      out[n] = acc;
    }
    return out;
  }
  const std::size_t needed = w.size() + rir.taps.size() - 1;
  std::size_t nfft = 1;
  while (nfft < needed) nfft <<= 1;
  std::vector<double> a(nfft, 0.0), b(nfft, 0.0);
  std::copy(w.samples.begin(), w.samples.end(), a.begin());
  std::copy(rir.taps.begin(), rir.taps.end(), b.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  std::vector<double> conv;
  fft.inv(conv, fa);
  std::copy_n(conv.begin(), w.size(), out.samples.begin());
  return out;
}

RirCache::RirCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string RirCache::key(const RoomSpec& room, const Point3& source, int max_order, int sample_rate) const {
  ContentHash h;
  h.add(room.length).add(room.width).add(room.height).add(room.rt60);
  h.add(room.mic.x).add(room.mic.y).add(room.mic.z);
  h.add(source.x).add(source.y).add(source.z);
  h.add(std::uint64_t(max_order)).add(std::uint64_t(sample_rate));
  return h.hex();
}

Rir RirCache::get(const RoomSpec& room, const Point3& source, int max_order, int sample_rate) {
  const auto path = dir_ / (key(room, source, max_order, sample_rate) + ".f32");
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    const auto bytes = std::filesystem::file_size(path);
    std::vector<float> raw(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(float)));
    if (in) {
      Rir rir;
      rir.sample_rate = sample_rate;
      rir.taps.assign(raw.begin(), raw.end());
      return rir;
    }
  }
  Rir rir = image_source_rir(room, source, max_order, sample_rate);
  std::vector<float> raw(rir.taps.begin(), rir.taps.end());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size() * sizeof(float)));
  // Cached taps are float32; return the same precision a cache hit would.
  rir.taps.assign(raw.begin(), raw.end());
  return rir;
}

}  // namespace hetsep
