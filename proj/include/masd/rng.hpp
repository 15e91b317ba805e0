#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace masd {

/// Portable pseudo-random stream: xoshiro256** seeded through splitmix64.
///
/// The sequence depends only on the seed, never on the platform or the
/// standard library, which is why std::*_distribution is not used anywhere.
/// Doubles take the top 53 bits of a draw; normals use Box-Muller on two
/// uniform draws (no cached spare, so the state is exactly the four words).
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  bool bernoulli(double p);
  /// Unbiased integer on [0, n); n must be positive.
  std::size_t index(std::size_t n);

  /// Independent child stream, derived deterministically from this one.
  Rng split();

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  State state_{};
};

}  // namespace masd
