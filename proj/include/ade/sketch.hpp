#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ade/error.hpp"
#include "ade/numeric.hpp"
#include "ade/rng.hpp"
#include "ade/stable.hpp"

namespace ade {

inline constexpr std::size_t kDefaultMemoryCapBytes = std::size_t{2} << 30;

/// Entry distribution of a sketch matrix.
struct SketchKind {
  enum class Family { kGaussianInvM, kPStable };

  Family family = Family::kGaussianInvM;
  double p = 2.0;

  static SketchKind gaussian_inv_m() { return {Family::kGaussianInvM, 2.0}; }
  static SketchKind p_stable(double p) { return {Family::kPStable, StableParams(p).p()}; }

  bool is_gaussian() const { return family == Family::kGaussianInvM; }

  friend bool operator==(const SketchKind&, const SketchKind&) = default;
};

inline void check_capacity(std::size_t doubles, std::size_t cap_bytes) {
  const std::size_t limit = cap_bytes / sizeof(double);
  if (doubles > limit) {
    const std::size_t bytes = doubles > SIZE_MAX / sizeof(double) ? SIZE_MAX : doubles * sizeof(double);
    throw CapacityError(bytes, cap_bytes);
  }
}

inline std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > SIZE_MAX / a) return SIZE_MAX;
  return a * b;
}

/// Dense row-major m x d random projection.
class SketchMatrix {
 public:
  SketchMatrix() = default;

  /// Wraps explicit entries (synthetic matrices, deserialization).
  SketchMatrix(SketchKind kind, std::size_t m, std::size_t d, std::vector<double> entries,
               std::uint64_t stream_id = 0)
      : kind_(kind), m_(m), d_(d), entries_(std::move(entries)), stream_id_(stream_id) {
    if (m_ == 0 || d_ == 0) throw DimensionError("sketch matrix needs m >= 1 and d >= 1");
    if (entries_.size() != m_ * d_) {
      throw DimensionError("sketch matrix entries: expected " + std::to_string(m_ * d_) +
                           ", got " + std::to_string(entries_.size()));
    }
  }

  const SketchKind& kind() const { return kind_; }
  std::size_t rows() const { return m_; }
  std::size_t cols() const { return d_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::span<const double> entries() const { return entries_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(entries_).subspan(i * d_, d_);
  }

  friend bool operator==(const SketchMatrix&, const SketchMatrix&) = default;

 private:
  SketchKind kind_;
  std::size_t m_ = 0;
  std::size_t d_ = 0;
  std::vector<double> entries_;
  std::uint64_t stream_id_ = 0;
};

/// Image of a vector under one sketch matrix.
struct SketchedVector {
  std::vector<double> values;
  std::uint64_t source_matrix = 0;
};

/// Draws an m x d matrix with i.i.d. entries of the requested kind. Gaussian
/// entries have variance 1/m; stable entries follow Stab(p).
inline SketchMatrix gen_sketch(SketchKind kind, std::size_t m, std::size_t d, CounterRng stream,
                               std::size_t memory_cap_bytes = kDefaultMemoryCapBytes) {
  if (m == 0 || d == 0) throw DimensionError("sketch matrix needs m >= 1 and d >= 1");
  check_capacity(checked_mul(m, d), memory_cap_bytes);
  const std::uint64_t id = stream.key();
  std::vector<double> entries(m * d);
  if (kind.is_gaussian()) {
    fill_normal(stream, entries, 1.0 / std::sqrt(static_cast<double>(m)));
  } else {
    fill_stable(StableParams(kind.p), stream, entries);
  }
  return SketchMatrix(kind, m, d, std::move(entries), id);
}

/// out = matrix * v. `out` must have matrix.rows() slots.
inline void apply_into(const SketchMatrix& matrix, std::span<const double> v, std::span<double> out) {
  if (v.size() != matrix.cols()) {
    throw DimensionError("apply: vector has dimension " + std::to_string(v.size()) +
                         ", matrix expects " + std::to_string(matrix.cols()));
  }
  if (out.size() != matrix.rows()) throw DimensionError("apply: output length mismatch");
  for (std::size_t i = 0; i < matrix.rows(); ++i) out[i] = dot(matrix.row(i), v);
}

inline SketchedVector apply(const SketchMatrix& matrix, std::span<const double> v) {
  SketchedVector sv{std::vector<double>(matrix.rows()), matrix.stream_id()};
  apply_into(matrix, v, sv.values);
  return sv;
}

/// Row-major n x d block of points.
struct PointSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * d, d);
  }
};

/// Sketches of n points under l matrices that share one shape, stored
/// sketch-major: block (i, j) holds matrices[j] * x_i and the blocks of one
/// matrix are contiguous.
class SketchTable {
 public:
  SketchTable() = default;
  SketchTable(std::size_t n, std::size_t l, std::size_t m, std::vector<double> values)
      : n_(n), l_(l), m_(m), values_(std::move(values)) {
    if (values_.size() != n_ * l_ * m_) throw DimensionError("sketch table size mismatch");
  }

  std::size_t points() const { return n_; }
  std::size_t sketches() const { return l_; }
  std::size_t rows() const { return m_; }

  std::span<const double> at(std::size_t i, std::size_t j) const {
    return std::span<const double>(values_).subspan((j * n_ + i) * m_, m_);
  }
  std::span<double> at(std::size_t i, std::size_t j) {
    return std::span<double>(values_).subspan((j * n_ + i) * m_, m_);
  }
  std::span<const double> values() const { return values_; }
  std::size_t capacity_doubles() const { return values_.capacity(); }

  friend bool operator==(const SketchTable&, const SketchTable&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t l_ = 0;
  std::size_t m_ = 0;
  std::vector<double> values_;
};

/// Blocked product of every point with every matrix. Entries match apply()
/// bit for bit: both use dot() over the same row and point.
inline SketchTable apply_batch(std::span<const SketchMatrix> matrices, const PointSet& points,
                               std::size_t memory_cap_bytes = kDefaultMemoryCapBytes) {
  if (points.values.size() != points.n * points.d) throw DimensionError("point set size mismatch");
  const std::size_t l = matrices.size();
  if (points.n == 0 || l == 0) return SketchTable(points.n, l, 0, {});
  const std::size_t m = matrices.front().rows();
  for (const auto& mat : matrices) {
    if (mat.rows() != m || mat.cols() != points.d) {
      throw DimensionError("apply_batch: matrices must all be " + std::to_string(m) + " x " +
                           std::to_string(points.d));
    }
  }
  check_capacity(checked_mul(checked_mul(points.n, l), m), memory_cap_bytes);

  // Point blocks stay cache-resident while each matrix row streams past once.
  constexpr std::size_t kBlock = 64;
  std::vector<double> out(points.n * l * m);
  for (std::size_t j = 0; j < l; ++j) {
    const SketchMatrix& mat = matrices[j];
    for (std::size_t i0 = 0; i0 < points.n; i0 += kBlock) {
      const std::size_t i1 = std::min(points.n, i0 + kBlock);
      for (std::size_t r = 0; r < m; ++r) {
        const auto row = mat.row(r);
        for (std::size_t i = i0; i < i1; ++i) out[(j * points.n + i) * m + r] = dot(row, points.row(i));
      }
    }
  }
  return SketchTable(points.n, l, m, std::move(out));
}

/// Euclidean length of a sketched vector (no rescaling).
inline double estimate_l2(std::span<const double> values) { return norm2(values); }
inline double estimate_l2(const SketchedVector& sv) { return estimate_l2(sv.values); }

/// Median of absolute coordinates divided by Med_p. `scratch` is clobbered.
inline double estimate_lp(std::span<const double> values, double med_p, std::vector<double>& scratch) {
  if (!(med_p > 0.0)) throw ParameterError("Med_p must be positive");
  scratch.resize(values.size());
  std::transform(values.begin(), values.end(), scratch.begin(), [](double x) { return std::abs(x); });
  return median_inplace(scratch) / med_p;
}

inline double estimate_lp(std::span<const double> values, double med_p) {
  std::vector<double> scratch;
  return estimate_lp(values, med_p, scratch);
}
inline double estimate_lp(const SketchedVector& sv, double med_p) { return estimate_lp(sv.values, med_p); }

inline double frobenius(const SketchMatrix& matrix) { return norm2(matrix.entries()); }

}  // namespace ade
