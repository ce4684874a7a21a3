#include "hetsep/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

#include "hetsep/errors.hpp"

namespace hetsep {
namespace {

struct WavInfo {
  std::uint16_t format_tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::streampos data_offset = 0;
  std::uint32_t data_bytes = 0;
};

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                              char((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}
void put16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{char(v & 0xff), char((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

WavInfo parse_header(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char*>(riff), 12) || std::memcmp(riff, "RIFF", 4) != 0 ||
      std::memcmp(riff + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path.string());
  }
  WavInfo info;
  bool have_fmt = false;
  while (true) {
    unsigned char chunk[8];
    if (!in.read(reinterpret_cast<char*>(chunk), 8)) break;
    const std::uint32_t size = le32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      std::vector<unsigned char> fmt(size);
      in.read(reinterpret_cast<char*>(fmt.data()), size);
      if (size < 16) throw IoError("truncated fmt chunk: " + path.string());
      info.format_tag = le16(fmt.data());
      info.channels = le16(fmt.data() + 2);
      info.sample_rate = le32(fmt.data() + 4);
      info.bits = le16(fmt.data() + 14);
      if (info.format_tag == 0xFFFE && size >= 26) info.format_tag = le16(fmt.data() + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      info.data_offset = in.tellg();
      info.data_bytes = size;
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || info.data_offset == std::streampos(0)) {
    throw IoError("missing fmt or data chunk: " + path.string());
  }
  const bool pcm16 = info.format_tag == 1 && info.bits == 16;
  const bool float32 = info.format_tag == 3 && info.bits == 32;
  if (!pcm16 && !float32) {
    throw IoError("unsupported WAV encoding (need 16-bit PCM or 32-bit float): " + path.string());
  }
  if (info.channels == 0) throw IoError("zero channels: " + path.string());
  return info;
}

}  // namespace

std::pair<std::size_t, int> probe_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const WavInfo info = parse_header(in, path);
  const std::size_t frame_bytes = std::size_t(info.channels) * (info.bits / 8);
  return {info.data_bytes / frame_bytes, int(info.sample_rate)};
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const WavInfo info = parse_header(in, path);
  std::vector<unsigned char> raw(info.data_bytes);
  in.read(reinterpret_cast<char*>(raw.data()), info.data_bytes);
  const std::size_t got = std::size_t(in.gcount());
  const std::size_t sample_bytes = info.bits / 8;
  const std::size_t frame_bytes = sample_bytes * info.channels;
  const std::size_t frames = got / frame_bytes;
  Waveform w(frames, int(info.sample_rate));
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* p = raw.data() + i * frame_bytes;
    if (info.format_tag == 1) {
      w[i] = double(std::int16_t(le16(p))) / 32768.0;
    } else {
      const std::uint32_t bits = le32(p);
      float f;
      std::memcpy(&f, &bits, 4);
      w[i] = double(f);
    }
  }
  if (!all_finite(w.view())) throw IoError("non-finite samples in " + path.string());
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavFormat format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::kPcm16 ? 1 : 3;
  const std::uint32_t data_bytes = std::uint32_t(w.size() * (bits / 8));
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, tag);
  put16(out, 1);
  put32(out, std::uint32_t(w.sample_rate));
  put32(out, std::uint32_t(w.sample_rate) * (bits / 8));
  put16(out, bits / 8);
  put16(out, bits);
  out.write("data", 4);
  put32(out, data_bytes);
  for (double v : w.samples) {
    if (format == WavFormat::kPcm16) {
      const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      put16(out, std::uint16_t(std::int16_t(scaled)));
    } else {
      const float f = float(v);
      std::uint32_t bits32;
      std::memcpy(&bits32, &f, 4);
      put32(out, bits32);
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("resample: target rate must be positive");
  if (w.sample_rate == target_rate) return w;
  const double ratio = double(target_rate) / double(w.sample_rate);
  const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
  constexpr int kHalfWidth = 32;
  const std::size_t out_len = std::size_t(std::floor(double(w.size()) * ratio));
  Waveform out(out_len, target_rate);
  const double half_span = kHalfWidth / cutoff;
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = double(n) / ratio;
    const long lo = long(std::ceil(t - half_span));
    const long hi = long(std::floor(t + half_span));
    double acc = 0.0;
    for (long k = std::max(0L, lo); k <= std::min(long(w.size()) - 1, hi); ++k) {
      const double d = (t - double(k)) * cutoff;
      const double sinc = d == 0.0 ? 1.0 : std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
      const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * d / kHalfWidth));
      acc += w[std::size_t(k)] * cutoff * sinc * win;
    }
    out[n] = acc;
  }
  return out;
}

}  // namespace hetsep
