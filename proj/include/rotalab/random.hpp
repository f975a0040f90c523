// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. Every stochastic operation in rotalab takes
// an explicit RandomStream so that runs replay bit-identically.
//
// The generator is Philox4x64-10 (Salmon et al., "Parallel random numbers:
// as easy as 1, 2, 3"). A stream is keyed by (seed, stream_id); its counter
// is pre-incremented before each block, which makes the raw output identical
// to numpy.random.Philox(key=[seed, stream_id]).random_raw().

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace rotalab {

using PhiloxCounter = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;

/// One Philox4x64 block with 10 rounds.
PhiloxCounter philox4x64(PhiloxCounter counter, PhiloxKey key) noexcept;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable seed derivation from (master, label, index). FNV-1a over the label
/// bytes, folded with the master seed and index through mix64. Adding new
/// labels never changes the seeds derived for existing ones.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index) noexcept;

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  /// Independent child stream; deterministic in (this stream's key, id).
  RandomStream split(std::uint64_t id) const noexcept;

  PhiloxKey key() const noexcept { return key_; }

 private:
  PhiloxKey key_;
  std::uint64_t position_ = 0;
  PhiloxCounter buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rotalab
