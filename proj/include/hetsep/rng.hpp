#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace hetsep {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Folds a key tuple into one seed; used for counter-style stream derivation so
/// that any worker can reproduce the stream for (base_seed, split, index).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// Seeded generator with platform-independent draws. Uses mt19937_64 for the bit
/// stream and fixed arithmetic for the distributions (std distributions are not
/// portable across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a content hash, used for cache keys, provenance and determinism checks.
class ContentHash {
 public:
  ContentHash& bytes(const void* data, std::size_t n);
  ContentHash& add(std::string_view s);
  ContentHash& add(double v);
  ContentHash& add(std::uint64_t v);
  ContentHash& add(std::span<const double> values);
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace hetsep
