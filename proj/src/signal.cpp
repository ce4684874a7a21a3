#include "hetsep/signal.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hetsep/errors.hpp"

namespace hetsep {

bool all_finite(std::span<const double> values) noexcept {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_compatible(const Waveform& a, const Waveform& b) {
  if (a.size() != b.size() || a.sample_rate != b.sample_rate) {
    throw DataError("waveform mismatch: " + std::to_string(a.size()) + "@" +
                    std::to_string(a.sample_rate) + " vs " + std::to_string(b.size()) + "@" +
                    std::to_string(b.sample_rate));
  }
}

double energy(std::span<const double> w) noexcept {
  double acc = 0.0;
  for (double v : w) acc += v * v;
  return acc;
}

double snr_db(const Waveform& a, const Waveform& b) {
  const double eb = energy(b);
  if (eb <= 0.0) throw DataError("snr_db: zero-energy denominator");
  return 10.0 * std::log10(energy(a) / eb);
}

double snr_gain(const Waveform& reference, const Waveform& other, double snr) {
  const double er = energy(reference);
  const double eo = energy(other);
  if (er <= 0.0 || eo <= 0.0) throw DataError("rescale_to_snr: unusable clip with zero energy");
  return std::sqrt(er / (eo * std::pow(10.0, snr / 10.0)));
}

Waveform rescale_to_snr(const Waveform& reference, const Waveform& other, double snr) {
  return snr_gain(reference, other, snr) * other;
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw DataError("si_sdr: length mismatch");
  double ref_energy = 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  if (ref_energy <= 0.0) {
    throw DataError("si_sdr: zero reference (route zero-target cases through the other slot)");
  }
  const double alpha = dot / ref_energy;
  double target = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = t - estimate[i];
    target += t * t;
    residual += e * e;
  }
  if (target == 0.0) return -std::numeric_limits<double>::infinity();
  if (residual == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(target / residual);
}

std::pair<Waveform, Waveform> mixture_consistency_project(const Waveform& est_t,
                                                          const Waveform& est_o,
                                                          const Waveform& x) {
  require_compatible(est_t, x);
  require_compatible(est_o, x);
  Waveform out_t = est_t;
  Waveform out_o = est_o;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double half = 0.5 * (x[i] - (est_t[i] + est_o[i]));
    out_t[i] += half;
    out_o[i] += half;
  }
  return {std::move(out_t), std::move(out_o)};
}

Waveform operator+(const Waveform& a, const Waveform& b) {
  require_compatible(a, b);
  Waveform out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Waveform operator-(const Waveform& a, const Waveform& b) {
  require_compatible(a, b);
  Waveform out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Waveform operator*(double gain, const Waveform& w) {
  Waveform out = w;
  for (double& v : out.samples) v *= gain;
  return out;
}

Waveform delay(const Waveform& w, std::size_t shift) {
  Waveform out(w.size(), w.sample_rate);
  for (std::size_t i = shift; i < w.size(); ++i) out[i] = w[i - shift];
  return out;
}

}  // namespace hetsep
