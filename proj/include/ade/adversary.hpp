#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ade/ade.hpp"
#include "ade/error.hpp"
#include "ade/numeric.hpp"
#include "ade/rng.hpp"
#include "ade/sketch.hpp"

namespace ade {

/// Black-box distance oracle over a fixed database of n points in R^d.
class DistanceOracle {
 public:
  enum class Kind { kNaiveJl, kAde, kExact };

  virtual ~DistanceOracle() = default;

  /// Reported distances from q to every database point.
  virtual std::vector<double> answer(std::span<const double> q) = 0;
  virtual std::size_t dim() const = 0;
  virtual Kind kind() const = 0;
  virtual std::string descriptor() const = 0;
};

inline std::string kind_name(DistanceOracle::Kind kind) {
  switch (kind) {
    case DistanceOracle::Kind::kNaiveJl: return "naive";
    case DistanceOracle::Kind::kAde: return "ade";
    case DistanceOracle::Kind::kExact: return "exact";
  }
  return "unknown";
}

/// True Euclidean distances.
class ExactOracle final : public DistanceOracle {
 public:
  explicit ExactOracle(PointSet points) : points_(std::move(points)) {}

  std::vector<double> answer(std::span<const double> q) override {
    if (q.size() != points_.d) throw DimensionError("exact oracle: query dimension mismatch");
    std::vector<double> out(points_.n), diff(points_.d);
    for (std::size_t i = 0; i < points_.n; ++i) {
      const auto x = points_.row(i);
      for (std::size_t c = 0; c < points_.d; ++c) diff[c] = q[c] - x[c];
      out[i] = norm2(diff);
    }
    return out;
  }
  std::size_t dim() const override { return points_.d; }
  Kind kind() const override { return Kind::kExact; }
  std::string descriptor() const override { return "exact"; }

 private:
  PointSet points_;
};

/// One fixed k x d Gaussian sketch (variance 1/k) for its whole lifetime;
/// answers |Pi (q - x_i)|.
class NaiveJlOracle final : public DistanceOracle {
 public:
  NaiveJlOracle(const PointSet& points, std::size_t k, CounterRng stream)
      : matrix_(gen_sketch(SketchKind::gaussian_inv_m(), k, points.d, stream)),
        stored_(apply_batch(std::span<const SketchMatrix>(&matrix_, 1), points)),
        projected_(k),
        diff_(k) {}

  std::vector<double> answer(std::span<const double> q) override {
    apply_into(matrix_, q, projected_);
    std::vector<double> out(stored_.points());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto s = stored_.at(i, 0);
      for (std::size_t r = 0; r < diff_.size(); ++r) diff_[r] = projected_[r] - s[r];
      out[i] = norm2(diff_);
    }
    return out;
  }
  std::size_t dim() const override { return matrix_.cols(); }
  Kind kind() const override { return Kind::kNaiveJl; }
  std::string descriptor() const override { return "naive_jl(k=" + std::to_string(matrix_.rows()) + ")"; }

  /// White-box access for diagnostics only.
  const SketchMatrix& matrix() const { return matrix_; }

 private:
  SketchMatrix matrix_;
  SketchTable stored_;
  std::vector<double> projected_;
  std::vector<double> diff_;
};

/// The ensemble structure behind the oracle interface; owns its query stream.
class AdeOracle final : public DistanceOracle {
 public:
  AdeOracle(AdeStructure structure, CounterRng query_stream)
      : structure_(std::move(structure)), rng_(query_stream) {}

  std::vector<double> answer(std::span<const double> q) override { return query(structure_, q, rng_).estimates; }
  std::size_t dim() const override { return structure_.dim(); }
  Kind kind() const override { return Kind::kAde; }
  std::string descriptor() const override {
    return "ade(m=" + std::to_string(structure_.rows()) + ",l=" + std::to_string(structure_.sketch_count()) +
           ",r=" + std::to_string(structure_.samples_per_query()) + ")";
  }
  const AdeStructure& structure() const { return structure_; }

 private:
  AdeStructure structure_;
  CounterRng rng_;
};

/// The three-point database {-e_axis, 0, e_axis}, in that order.
inline PointSet attack_database(std::size_t d, std::size_t axis = 0) {
  if (axis >= d) throw DimensionError("attack axis outside the dimension");
  PointSet pts{3, d, std::vector<double>(3 * d, 0.0)};
  pts.values[axis] = -1.0;
  pts.values[2 * d + axis] = 1.0;
  return pts;
}

struct AttackConfig {
  std::size_t n_rounds = 2000;
  std::size_t eval_every = 50;
};

/// One evaluation of the accumulated vector.
struct EvalRecord {
  std::size_t round = 0;
  int w = 0;
  double acc_norm_true = 0.0;
  double acc_norm_reported = 0.0;
  double ratio = 0.0;
};

struct AttackTrace {
  /// Sign bit of every round.
  std::vector<std::uint8_t> signs;
  /// Key of the stream each round's probe was drawn from.
  std::vector<std::uint64_t> probe_keys;
  std::vector<EvalRecord> evals;
  /// Final accumulated vector.
  std::vector<double> z;
};

namespace detail {

inline AttackTrace run_schedule(DistanceOracle& oracle, const AttackConfig& config, CounterRng rng, bool adaptive) {
  if (config.n_rounds == 0) throw ParameterError("attack needs at least one round");
  if (config.eval_every == 0) throw ParameterError("eval_every must be positive");
  const std::size_t d = oracle.dim();
  AttackTrace trace;
  trace.signs.reserve(config.n_rounds);
  trace.probe_keys.reserve(config.n_rounds);
  trace.z.assign(d, 0.0);
  std::vector<double> probe(d);
  for (std::size_t round = 1; round <= config.n_rounds; ++round) {
    CounterRng probe_stream = rng.split("probe", round);
    trace.probe_keys.push_back(probe_stream.key());
    fill_normal(probe_stream, probe);
    int w = 0;
    if (adaptive) {
      const auto reported = oracle.answer(probe);
      if (reported.size() != 3) throw DimensionError("attack oracle must hold exactly {-e, 0, e}");
      // W = 1 iff the probe looks at least as close to +e as to -e.
      w = reported[2] <= reported[0] ? 1 : 0;
    }
    trace.signs.push_back(static_cast<std::uint8_t>(w));
    const double sign = w == 1 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < d; ++c) trace.z[c] += sign * probe[c];

    if (round % config.eval_every == 0) {
      EvalRecord rec;
      rec.round = round;
      rec.w = w;
      rec.acc_norm_true = norm2(trace.z);
      rec.acc_norm_reported = oracle.answer(trace.z)[1];
      rec.ratio = rec.acc_norm_reported / rec.acc_norm_true;
      trace.evals.push_back(rec);
    }
  }
  return trace;
}

}  // namespace detail

/// Sign-accumulation attack: random Gaussian probes, each added with the sign
/// given by which of +/-e the oracle reports as closer; every `eval_every`
/// rounds the accumulated vector's reported length is compared with its true
/// length. Evaluation answers never influence later probes.
inline AttackTrace run_attack(DistanceOracle& oracle, const AttackConfig& config, CounterRng rng) {
  return detail::run_schedule(oracle, config, rng, true);
}

/// Same schedule and probes, no sign adaptation.
inline AttackTrace random_query_baseline(DistanceOracle& oracle, const AttackConfig& config, CounterRng rng) {
  return detail::run_schedule(oracle, config, rng, false);
}

/// Cosine between z and Pi^T Pi e_axis. White-box; diagnostics only.
inline double alignment_diagnostic(std::span<const double> z, const SketchMatrix& pi, std::size_t axis = 0) {
  if (z.size() != pi.cols()) throw DimensionError("alignment: dimension mismatch");
  if (axis >= pi.cols()) throw DimensionError("alignment: axis outside the dimension");
  std::vector<double> y(pi.cols(), 0.0);
  for (std::size_t r = 0; r < pi.rows(); ++r) {
    const auto row = pi.row(r);
    const double coef = row[axis];
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += coef * row[c];
  }
  const double nz = norm2(z);
  const double ny = norm2(y);
  if (!(nz > 0.0) || !(ny > 0.0)) throw ParameterError("alignment: zero-norm input");
  return dot(z, y) / (nz * ny);
}

}  // namespace ade
