#pragma once

#include <cstdint>
#include <initializer_list>

namespace dig {

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Mixes a base seed with a list of tags (epoch, index, stream id, ...).
/// Result is kept below 2^53 so it survives a JSON round trip as a number.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Small deterministic generator (xoshiro256**). Distribution code is
/// hand-rolled so sequences do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p);
  /// Standard normal (Box-Muller, one value per call).
  double normal();

 private:
  std::uint64_t s_[4];
};

}  // namespace dig
