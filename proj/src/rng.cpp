#include "pln/rng.hpp"

#include <cmath>

#include "pln/errors.hpp"
#include "pln/stats.hpp"

namespace pln {
namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer (Steele, Lea & Flood 2014).
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed ^ kGamma)) {}

Rng Rng::derive(std::uint64_t label) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64((label + 1) * kGamma));
  child.counter_ = 0;
  return child;
}

std::uint64_t Rng::next_u64() { return mix64(key_ + (++counter_) * kGamma); }

double Rng::uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return double(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double Rng::normal() { return normal_quantile(uniform_open()); }

long Rng::poisson(double rate) {
  if (!(rate >= 0.0)) {
    throw ParameterDomainError("poisson: rate must be nonnegative");
  }
  if (rate == 0.0) return 0;
  if (rate < 10.0) {
    // Inversion by sequential search.
    const double p0 = std::exp(-rate);
    double p = p0, cdf = p0;
    const double u = uniform01();
    long k = 0;
    while (u > cdf && k < 10000) {
      ++k;
      p *= rate / double(k);
      cdf += p;
    }
    return k;
  }
  // PTRS transformed rejection (Hormann 1993).
  const double slam = std::sqrt(rate);
  const double loglam = std::log(rate);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform01() - 0.5;
    const double v = uniform01();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + rate + 0.43);
    if (us >= 0.07 && v <= v_r) return long(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * loglam - rate - std::lgamma(kf + 1.0)) {
      return long(kf);
    }
  }
}

}  // namespace pln
