#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dil {

/// One step of splitmix64; used to mix seeds, never as a stream generator.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent child seed from (seed, key). Order-independent by construction:
/// the child depends only on its own key, so tasks can be seeded in any order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept;

/// FNV-1a 64-bit hash, stable across platforms; used to key seeds by names.
std::uint64_t stable_hash(std::string_view text) noexcept;

/// Deterministic random stream. The engine is mt19937_64, whose output sequence is fixed
/// by the standard; all transforms below are spelled out here rather than delegated to
/// the implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n), unbiased (rejection on the low zone).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal by the Box-Muller transform: u1 in (0,1], u2 in [0,1),
  /// r = sqrt(-2 ln u1), returns r cos(2 pi u2) then r sin(2 pi u2) on the next call.
  double normal();

  /// k distinct indices from [0, n) via partial Fisher-Yates, returned sorted.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dil
