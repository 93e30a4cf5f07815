#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ade/error.hpp"

namespace ade {

namespace detail {

constexpr std::size_t kDotLanes = 8;

inline double reduce_lanes(const std::array<double, kDotLanes>& acc) {
  return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

}  // namespace detail

/// Dot product with a fixed accumulation order: eight interleaved partial
/// sums, combined pairwise. Every product in the library goes through this
/// order, so single and batched sketching agree bit for bit.
inline double dot(std::span<const double> a, std::span<const double> b) {
  using detail::kDotLanes;
  std::array<double, kDotLanes> acc{};
  const std::size_t n = a.size();
  const std::size_t body = n - n % kDotLanes;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < body; i += kDotLanes) {
    for (std::size_t k = 0; k < kDotLanes; ++k) acc[k] += pa[i + k] * pb[i + k];
  }
  for (std::size_t i = body; i < n; ++i) acc[i - body] += pa[i] * pb[i];
  return detail::reduce_lanes(acc);
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// (sum |v_i|^p)^(1/p); for p < 1 this is the usual quasi-norm.
inline double lp_norm(std::span<const double> v, double p) {
  if (p == 2.0) return norm2(v);
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

/// Median that reorders its input. Even lengths average the two middle order
/// statistics.
inline double median_inplace(std::span<double> values) {
  if (values.empty()) throw DimensionError("median of an empty sequence");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return lower + (upper - lower) / 2.0;
}

inline double median(std::span<const double> values) {
  std::vector<double> copy(values.begin(), values.end());
  return median_inplace(copy);
}

}  // namespace ade
