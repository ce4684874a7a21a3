#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace hetsep {

inline constexpr int kDefaultSampleRate = 8000;
inline constexpr std::size_t kDefaultClipSamples = 32000;  // 4 s at 8 kHz

/// Single-channel, fixed-rate time-domain signal.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  Waveform() = default;
  explicit Waveform(std::size_t length, int rate = kDefaultSampleRate)
      : samples(length, 0.0), sample_rate(rate) {}
  Waveform(std::vector<double> values, int rate) : samples(std::move(values)), sample_rate(rate) {}

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double& operator[](std::size_t i) { return samples[i]; }
  double operator[](std::size_t i) const { return samples[i]; }
  std::span<const double> view() const noexcept { return samples; }

  bool operator==(const Waveform&) const = default;
};

bool all_finite(std::span<const double> values) noexcept;

/// Throws DataError when the two waveforms differ in length or rate.
void require_compatible(const Waveform& a, const Waveform& b);

double energy(std::span<const double> w) noexcept;
inline double energy(const Waveform& w) noexcept { return energy(w.view()); }

/// 10 log10(energy(a) / energy(b)).
double snr_db(const Waveform& a, const Waveform& b);

/// Gain g such that 10 log10(energy(reference) / energy(g * other)) == snr_db.
double snr_gain(const Waveform& reference, const Waveform& other, double snr_db);

/// Returns g * other scaled to the requested SNR relative to `reference`.
/// Throws DataError when either input has zero energy.
Waveform rescale_to_snr(const Waveform& reference, const Waveform& other, double snr_db);

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The reference is scaled by alpha = <estimate, reference> / |reference|^2 and
/// the result is 10 log10(|alpha reference|^2 / |alpha reference - estimate|^2).
/// A zero residual yields +infinity and a zero projection yields -infinity.
/// Throws DataError for an all-zero reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
inline double si_sdr(const Waveform& estimate, const Waveform& reference) {
  return si_sdr(estimate.view(), reference.view());
}

/// Splits the residual x - (est_t + est_o) equally between the two estimates.
std::pair<Waveform, Waveform> mixture_consistency_project(const Waveform& est_t,
                                                          const Waveform& est_o,
                                                          const Waveform& x);

Waveform operator+(const Waveform& a, const Waveform& b);
Waveform operator-(const Waveform& a, const Waveform& b);
Waveform operator*(double gain, const Waveform& w);

/// Delays `w` by `shift` samples inside the same frame length (head zero-padded, tail dropped).
Waveform delay(const Waveform& w, std::size_t shift);

}  // namespace hetsep
