#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace rap {

/// Seeded random source with platform-independent draws.
///
/// std::*_distribution outputs differ between standard libraries, so the
/// uniform and normal draws here are built directly on the mt19937_64 bit
/// stream to keep corpora and initialisations identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal (Box-Muller, cached pair).
  double normal();
  /// Random permutation of 0..n-1 (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);
  /// k distinct indices from 0..n-1, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace rap
