#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ade/error.hpp"
#include "ade/numeric.hpp"
#include "ade/rng.hpp"
#include "ade/sketch.hpp"
#include "ade/stable.hpp"

namespace ade {

/// Build parameters. p = 2 selects the Gaussian (Euclidean) path; p < 2 uses
/// p-stable matrices with the median estimator.
struct AdeParams {
  double p = 2.0;
  double epsilon = 0.25;
  double delta = 0.05;
  double c_m = 40.0;
  double c_l = 1.0;
  double c_r = 3.0;
  std::uint64_t master_seed = 0;
  /// Upper bound on the number of sketches; 0 disables the cap.
  std::size_t l_cap = 0;
  std::size_t memory_cap_bytes = kDefaultMemoryCapBytes;

  bool euclidean() const { return p == 2.0; }

  void validate() const {
    StableParams checked(p);
    (void)checked;
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ParameterError("epsilon must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
    if (!(c_m > 0.0 && c_l > 0.0 && c_r > 0.0)) throw ParameterError("size constants must be positive");
  }
};

struct Sizes {
  std::size_t m = 0;
  std::size_t l = 0;
  std::size_t r = 0;

  friend bool operator==(const Sizes&, const Sizes&) = default;
};

namespace detail {

// Ceiling that ignores representation error of a few ulps (40 / 0.25^2 must be 640).
inline std::size_t ceil_count(double x) {
  const double c = std::ceil(x - 1e-9 * std::abs(x));
  return c < 1.0 ? 1 : static_cast<std::size_t>(c);
}

}  // namespace detail

/// Sketch rows m, sketch count l and samples per query r.
///
///   m = ceil(c_m / eps^2)
///   l = ceil(c_l (d + ln 1/delta) ln(3d/eps))   for p < 2
///   l = ceil(c_l (d + ln 1/delta))              for p = 2
///   r = ceil(c_r ln(2n/delta))
inline Sizes derive_sizes(const AdeParams& params, std::size_t d, std::size_t n) {
  params.validate();
  if (d == 0 || n == 0) throw DimensionError("derive_sizes needs d >= 1 and n >= 1");
  const double eps = params.epsilon;
  const double log_inv_delta = std::log(1.0 / params.delta);
  const double dd = static_cast<double>(d);
  Sizes s;
  s.m = detail::ceil_count(params.c_m / (eps * eps));
  double l = params.c_l * (dd + log_inv_delta);
  if (!params.euclidean()) l *= std::log(3.0 * dd / eps);
  s.l = detail::ceil_count(l);
  if (params.l_cap != 0) s.l = std::min(s.l, params.l_cap);
  s.r = detail::ceil_count(params.c_r * std::log(2.0 * static_cast<double>(n) / params.delta));
  return s;
}

/// Per-query output: one estimate per stored point plus the sketch indices
/// that produced it.
struct QueryResult {
  std::vector<double> estimates;
  std::vector<std::size_t> sampled_indices;
  /// n x r per-sketch estimates (row-major); empty unless requested.
  std::vector<double> per_point_samples;
};

enum class Aggregator { kMedian, kMajority };

inline std::vector<std::size_t> sample_indices(std::size_t l, std::size_t r, CounterRng& rng) {
  if (l == 0) throw DimensionError("cannot sample from an empty ensemble");
  std::vector<std::size_t> out(r);
  for (auto& j : out) j = static_cast<std::size_t>(uniform_index(rng, l));
  return out;
}

/// Most frequent value; ties go to the smallest.
inline double majority(std::span<const double> values) {
  if (values.empty()) throw DimensionError("majority of an empty sequence");
  std::map<double, std::size_t> counts;
  for (double v : values) ++counts[v];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

struct RobustAnswer {
  std::vector<double> aggregate;
  std::vector<std::size_t> indices;
  /// r answers, each of the instances' answer width.
  std::vector<std::vector<double>> samples;
};

/// Samples r of l answerers with replacement and aggregates their answers
/// coordinate-wise. `answer_of(j)` returns the answer of instance j.
template <typename AnswerFn>
  requires std::invocable<AnswerFn&, std::size_t>
RobustAnswer robust_answer(std::size_t l, std::size_t r, Aggregator aggregator, CounterRng& rng,
                           AnswerFn&& answer_of) {
  if (r == 0) throw ParameterError("robustify needs r >= 1");
  RobustAnswer out;
  out.indices = sample_indices(l, r, rng);
  out.samples.reserve(r);
  for (std::size_t j : out.indices) out.samples.push_back(answer_of(j));
  const std::size_t width = out.samples.front().size();
  for (const auto& s : out.samples) {
    if (s.size() != width) throw DimensionError("instances returned answers of different widths");
  }
  std::vector<double> column(r);
  out.aggregate.resize(width);
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t k = 0; k < r; ++k) column[k] = out.samples[k][c];
    out.aggregate[c] = aggregator == Aggregator::kMedian ? median_inplace(column) : majority(column);
  }
  return out;
}

/// Any answerer of a d-vector query with a vector of reals.
template <typename T>
concept Answerer = requires(T& t, std::span<const double> q) {
  { t.answer(q) } -> std::convertible_to<std::vector<double>>;
};

/// Generic wrapper turning l independent non-adaptive answerers into one
/// that answers each query from the median (or majority) of r randomly
/// chosen instances.
template <Answerer Instance>
class Robustified {
 public:
  Robustified(std::vector<Instance> instances, Aggregator aggregator, std::size_t r)
      : instances_(std::move(instances)), aggregator_(aggregator), r_(r) {
    if (instances_.empty()) throw ParameterError("robustify needs at least one instance");
    if (r_ == 0) throw ParameterError("robustify needs r >= 1");
  }

  RobustAnswer answer_detailed(std::span<const double> q, CounterRng& rng) {
    return robust_answer(instances_.size(), r_, aggregator_, rng,
                         [&](std::size_t j) { return std::vector<double>(instances_[j].answer(q)); });
  }

  std::vector<double> answer(std::span<const double> q, CounterRng& rng) {
    return answer_detailed(q, rng).aggregate;
  }

  std::size_t size() const { return instances_.size(); }
  std::size_t r() const { return r_; }

 private:
  std::vector<Instance> instances_;
  Aggregator aggregator_;
  std::size_t r_;
};

/// The adaptive distance-estimation structure: l independent sketches and the
/// sketches of every data point. The data points themselves are not kept.
class AdeStructure {
 public:
  AdeStructure() = default;

  /// Assembles a structure from its parts; validates every shape.
  AdeStructure(AdeParams params, std::size_t d, std::size_t n, std::size_t m, double med_p,
               std::vector<SketchMatrix> matrices, SketchTable sketches)
      : params_(params),
        d_(d),
        n_(n),
        m_(m),
        med_p_(med_p),
        matrices_(std::move(matrices)),
        sketches_(std::move(sketches)) {
    params_.validate();
    if (matrices_.empty()) throw DimensionError("structure needs at least one sketch matrix");
    for (const auto& mat : matrices_) {
      if (mat.rows() != m_ || mat.cols() != d_) throw DimensionError("sketch matrix shape mismatch");
    }
    if (sketches_.points() != n_ || sketches_.sketches() != matrices_.size() ||
        (n_ > 0 && sketches_.rows() != m_)) {
      throw DimensionError("sketch table shape mismatch");
    }
    if (!params_.euclidean() && !(med_p_ > 0.0)) throw CalibrationError("Med_p must be positive for p < 2");
  }

  const AdeParams& params() const { return params_; }
  std::size_t dim() const { return d_; }
  std::size_t points() const { return n_; }
  std::size_t rows() const { return m_; }
  std::size_t sketch_count() const { return matrices_.size(); }
  std::size_t samples_per_query() const { return derive_sizes(params_, d_, n_).r; }
  double med_p() const { return med_p_; }
  const std::vector<SketchMatrix>& matrices() const { return matrices_; }
  const SketchTable& sketches() const { return sketches_; }

  /// Length estimate from one sketched difference vector.
  double estimate(std::span<const double> sketched, std::vector<double>& scratch) const {
    return params_.euclidean() ? estimate_l2(sketched) : estimate_lp(sketched, med_p_, scratch);
  }

  /// Estimates of |q - x_i| for every i from matrix j alone.
  std::vector<double> answer_from(std::size_t j, std::span<const double> q) const {
    if (q.size() != d_) {
      throw DimensionError("query has dimension " + std::to_string(q.size()) + ", structure has " +
                           std::to_string(d_));
    }
    std::vector<double> projected(m_);
    apply_into(matrices_[j], q, projected);
    std::vector<double> diff(m_), scratch, out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto stored = sketches_.at(i, j);
      for (std::size_t k = 0; k < m_; ++k) diff[k] = projected[k] - stored[k];
      out[i] = estimate(diff, scratch);
    }
    return out;
  }

  /// Bytes held by matrices and stored sketches.
  std::size_t footprint_bytes() const {
    std::size_t doubles = sketches_.capacity_doubles();
    for (const auto& mat : matrices_) doubles += mat.entries().size();
    return doubles * sizeof(double);
  }

  friend bool operator==(const AdeStructure& a, const AdeStructure& b) {
    return a.d_ == b.d_ && a.n_ == b.n_ && a.m_ == b.m_ && same_bits(a.med_p_, b.med_p_) &&
           same_params(a.params_, b.params_) && a.matrices_ == b.matrices_ && a.sketches_ == b.sketches_;
  }

 private:
  static bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }
  static bool same_params(const AdeParams& a, const AdeParams& b) {
    return same_bits(a.p, b.p) && same_bits(a.epsilon, b.epsilon) && same_bits(a.delta, b.delta) &&
           same_bits(a.c_m, b.c_m) && same_bits(a.c_l, b.c_l) && same_bits(a.c_r, b.c_r) &&
           a.master_seed == b.master_seed;
  }

  AdeParams params_;
  std::size_t d_ = 0;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  double med_p_ = 0.0;
  std::vector<SketchMatrix> matrices_;
  SketchTable sketches_;
};

inline CounterRng matrix_stream(std::uint64_t master_seed, std::size_t j) {
  return CounterRng(master_seed).split("matrix", j);
}

inline void check_finite(const PointSet& points) {
  for (std::size_t i = 0; i < points.n; ++i) {
    for (double x : points.row(i)) {
      if (!std::isfinite(x)) throw IngestionError("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

/// Draws l sketch matrices from streams derived from the master seed and
/// stores every data point's sketch under each. Med_p comes from `table` on
/// the p < 2 path.
inline AdeStructure build(const PointSet& points, const AdeParams& params,
                          const MedPTable& table = MedPTable{}) {
  params.validate();
  if (points.n == 0) throw DimensionError("build needs at least one point");
  if (points.d == 0) throw DimensionError("build needs dimension d >= 1");
  if (points.values.size() != points.n * points.d) throw DimensionError("point set size mismatch");
  check_finite(points);

  const Sizes s = derive_sizes(params, points.d, points.n);
  const std::size_t doubles = checked_mul(checked_mul(s.l, s.m), points.d) +
                              checked_mul(checked_mul(points.n, s.m), s.l);
  check_capacity(doubles, params.memory_cap_bytes);

  const double medp = params.euclidean() ? 0.0 : table.require(params.p);
  const SketchKind kind = params.euclidean() ? SketchKind::gaussian_inv_m() : SketchKind::p_stable(params.p);

  std::vector<SketchMatrix> matrices;
  matrices.reserve(s.l);
  for (std::size_t j = 0; j < s.l; ++j) {
    matrices.push_back(gen_sketch(kind, s.m, points.d, matrix_stream(params.master_seed, j), params.memory_cap_bytes));
  }
  SketchTable table_out = apply_batch(matrices, points, params.memory_cap_bytes);
  return AdeStructure(params, points.d, points.n, s.m, medp, std::move(matrices), std::move(table_out));
}

/// Answers one query: samples r sketch indices with replacement, projects q
/// once per sampled index and returns per-point medians.
inline QueryResult query(const AdeStructure& structure, std::span<const double> q, CounterRng& rng,
                         bool keep_samples = false) {
  if (q.size() != structure.dim()) {
    throw DimensionError("query has dimension " + std::to_string(q.size()) + ", structure has " +
                         std::to_string(structure.dim()));
  }
  const std::size_t r = structure.samples_per_query();
  RobustAnswer ans = robust_answer(structure.sketch_count(), r, Aggregator::kMedian, rng,
                                   [&](std::size_t j) { return structure.answer_from(j, q); });
  QueryResult result;
  result.estimates = std::move(ans.aggregate);
  result.sampled_indices = std::move(ans.indices);
  if (keep_samples) {
    const std::size_t n = structure.points();
    result.per_point_samples.resize(n * r);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < r; ++k) result.per_point_samples[i * r + k] = ans.samples[k][i];
    }
  }
  return result;
}

/// Each query draws its own index sample; nothing but the structure is shared.
inline std::vector<QueryResult> query_repeated(const AdeStructure& structure,
                                               std::span<const std::vector<double>> queries,
                                               CounterRng& rng, bool keep_samples = false) {
  std::vector<QueryResult> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(query(structure, q, rng, keep_samples));
  return out;
}

/// Random direction with unit l_p norm (Gaussian entries, rescaled).
inline std::vector<double> random_unit_direction(std::size_t d, double p, CounterRng& rng) {
  std::vector<double> v(d);
  double norm = 0.0;
  while (!(norm > 0.0)) {
    fill_normal(rng, v);
    norm = lp_norm(v, p);
  }
  for (double& x : v) x /= norm;
  return v;
}

struct AuditReport {
  std::size_t l = 0;
  double threshold = 0.9;
  /// Per direction: number of matrices whose estimate lies in [1-eps, 1+eps].
  std::vector<std::size_t> counts;

  std::size_t min_count() const { return counts.empty() ? 0 : *std::min_element(counts.begin(), counts.end()); }
  double mean_count() const {
    double s = 0.0;
    for (auto c : counts) s += static_cast<double>(c);
    return counts.empty() ? 0.0 : s / static_cast<double>(counts.size());
  }
  std::size_t required() const {
    return static_cast<std::size_t>(std::ceil(threshold * static_cast<double>(l) - 1e-9));
  }
  bool passed() const {
    return std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return c >= required(); });
  }
};

/// Empirical representativeness: for random unit directions v, counts the
/// matrices whose length estimate of v falls within (1 +/- eps).
inline AuditReport audit_representativeness(const AdeStructure& structure, std::size_t n_directions,
                                            CounterRng& rng, double threshold = 0.9) {
  const double eps = structure.params().epsilon;
  AuditReport report;
  report.l = structure.sketch_count();
  report.threshold = threshold;
  report.counts.reserve(n_directions);
  std::vector<double> projected(structure.rows()), scratch;
  for (std::size_t t = 0; t < n_directions; ++t) {
    const auto v = random_unit_direction(structure.dim(), structure.params().p, rng);
    std::size_t good = 0;
    for (const auto& mat : structure.matrices()) {
      apply_into(mat, v, projected);
      const double est = structure.estimate(projected, scratch);
      if (est >= 1.0 - eps && est <= 1.0 + eps) ++good;
    }
    report.counts.push_back(good);
  }
  return report;
}

}  // namespace ade
