#pragma once

#include <cstdint>

namespace selfqa {

/// Counter-based deterministic RNG. The state is (key, counter); each draw
/// hashes key + counter with the splitmix64 finalizer, so streams can be
/// split per episode without any order dependence between them.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent substream; same (seed, id) always yields the same stream.
  RngStream split(std::uint64_t stream_id) const;

  std::uint64_t next_u64();

  /// Uniform in the open interval (0, 1).
  double uniform();

  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();

  /// Gumbel(0,1): -ln(-ln(U)) with U clamped away from 0 and 1 by 1e-12.
  double gumbel();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace selfqa
