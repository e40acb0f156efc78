#pragma once

#include <cstdint>

namespace pln {

// Splittable counter-based generator: output k is mix64(key + k*gamma)
// with the SplitMix64 finalizer, so a stream is a pure function of
// (key, counter). derive() hashes a label into an independent child key,
// letting replicates and sampling purposes own disjoint streams.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  // Independent child stream addressed by a label; pure, does not
  // advance this stream.
  Rng derive(std::uint64_t label) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01();

  // Uniform on (0, 1), safe as a quantile-transform argument.
  double uniform_open();

  // Standard normal via the inverse CDF.
  double normal();

  // Poisson draw; inversion by search below rate 10, Hormann's PTRS
  // transformed rejection above.
  long poisson(double rate);

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace pln
