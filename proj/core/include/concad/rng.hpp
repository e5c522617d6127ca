#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "concad/tensor.hpp"

namespace concad {

/// Seeded random stream with platform-independent distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The std:: distribution classes are implementation-defined, so
/// uniform, integer and normal draws are computed here from raw 64-bit words.
class RngStream {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit RngStream(std::uint64_t seed = 0);

  /// Independent child stream; the same (seed, salt) always yields the same child.
  RngStream derive(std::uint64_t salt) const;
  RngStream derive(std::string_view tag) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [lo, hi] inclusive, unbiased.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer, used to mix seeds and salts.
std::uint64_t mix64(std::uint64_t x);
/// FNV-1a 64-bit hash of a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// I.i.d. normal draws with mean 0 and variance 2 / fan_in.
Tensor he_normal_init(const Shape& shape, std::size_t fan_in, RngStream& rng);

}  // namespace concad
