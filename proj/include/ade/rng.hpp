#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace ade {

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Exact for x < 2^63; the signed conversion is a single instruction on
// targets without an unsigned one.
constexpr double to_double(std::uint64_t x) { return static_cast<double>(static_cast<std::int64_t>(x)); }

}  // namespace detail

/// Counter-based generator: output i is mix64(key + (i + 1) * golden).
///
/// The whole state is (key, counter), so streams are cheap to derive with
/// split() and a draw can be reproduced from its position alone. Satisfies
/// UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t seed) : key_(detail::mix64(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Independent child stream identified by `index`.
  constexpr CounterRng split(std::uint64_t index) const {
    CounterRng child;
    child.key_ = detail::mix64(key_ ^ detail::mix64(index + detail::kGolden));
    return child;
  }

  /// Child stream identified by a label and an index, e.g. ("matrix", j).
  constexpr CounterRng split(std::string_view label, std::uint64_t index) const {
    return split(detail::hash_label(label)).split(index);
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

  friend constexpr bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t key_ = detail::mix64(0);
  std::uint64_t counter_ = 0;
};

/// Uniform double in the open interval (0, 1).
inline double uniform_open01(CounterRng& rng) {
  return (detail::to_double(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by Lemire's multiply-and-reject.
inline std::uint64_t uniform_index(CounterRng& rng, std::uint64_t bound) {
  unsigned __int128 product = static_cast<unsigned __int128>(rng()) * bound;
  auto low = static_cast<std::uint64_t>(product);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      product = static_cast<unsigned __int128>(rng()) * bound;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::uint64_t>(product >> 64);
}

inline double standard_exponential(CounterRng& rng) { return -std::log(uniform_open01(rng)); }

/// Uniform point of the square (-1, 1)^2 on a 2^-31 grid, both coordinates
/// taken from one 64-bit draw. Neither coordinate is ever zero.
inline void square_candidate(CounterRng& rng, double& u, double& v) {
  const std::uint64_t x = rng();
  u = (detail::to_double(x >> 32) + 0.5) * 0x1.0p-31 - 1.0;
  v = (detail::to_double(x & 0xffffffffULL) + 0.5) * 0x1.0p-31 - 1.0;
}

/// Uniform point of the open unit disk by rejection; returns (u, v, u^2 + v^2).
inline void uniform_in_disk(CounterRng& rng, double& u, double& v, double& s) {
  do {
    square_candidate(rng, u, v);
    s = u * u + v * v;
  } while (s >= 1.0);
}

/// Fills `out` with i.i.d. N(0, sigma^2) draws (Marsaglia polar method, both
/// outputs of each accepted pair used). Consumes the stream exactly like
/// repeated uniform_in_disk() calls; the loop is written without a
/// data-dependent branch.
inline void fill_normal(CounterRng& rng, std::span<double> out, double sigma = 1.0) {
  const std::size_t pairs = out.size() / 2;
  double* dst = out.data();
  std::size_t k = 0;
  while (k < pairs) {
    double u, v;
    square_candidate(rng, u, v);
    const double s = u * u + v * v;
    const bool accept = s < 1.0;
    const double f = sigma * std::sqrt(-2.0 * std::log(accept ? s : 0.5) / (accept ? s : 0.5));
    dst[2 * k] = u * f;
    dst[2 * k + 1] = v * f;
    k += accept ? 1 : 0;
  }
  if (out.size() % 2 == 1) {
    double u, v, s;
    uniform_in_disk(rng, u, v, s);
    out.back() = u * sigma * std::sqrt(-2.0 * std::log(s) / s);
  }
}

inline double standard_normal(CounterRng& rng) {
  double z;
  fill_normal(rng, std::span<double>(&z, 1));
  return z;
}

}  // namespace ade
