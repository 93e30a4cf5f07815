#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ade/error.hpp"
#include "ade/numeric.hpp"
#include "ade/rng.hpp"

namespace ade {

/// Stability index of a symmetric p-stable law, normalized so that
/// E[exp(-itZ)] = exp(-|t|^p).
class StableParams {
 public:
  static constexpr double kMinP = 0.25;
  static constexpr double kMaxP = 2.0;

  explicit StableParams(double p) : p_(p) {
    if (!(p >= kMinP && p <= kMaxP)) {
      throw ParameterError("stability index p=" + std::to_string(p) + " outside [0.25, 2]");
    }
  }

  double p() const { return p_; }

 private:
  double p_;
};

/// One symmetric p-stable draw via the Chambers-Mallows-Stuck transform of a
/// uniform angle and a unit exponential. For p = 1 the transform reduces to
/// the tangent of a uniform angle, drawn here as the slope u/v of a uniform
/// point in the disk.
inline double sample_stable(const StableParams& params, CounterRng& rng) {
  const double p = params.p();
  if (p == 1.0) {
    double u, v, s;
    uniform_in_disk(rng, u, v, s);
    return u / v;
  }
  const double angle = std::numbers::pi * (uniform_open01(rng) - 0.5);
  const double w = standard_exponential(rng);
  return std::sin(p * angle) / std::pow(std::cos(angle), 1.0 / p) *
         std::pow(std::cos(angle - p * angle) / w, (1.0 - p) / p);
}

/// Fills `out` with Stab(p) draws; identical to repeated sample_stable().
inline void fill_stable(const StableParams& params, CounterRng& rng, std::span<double> out) {
  if (params.p() != 1.0) {
    for (double& x : out) x = sample_stable(params, rng);
    return;
  }
  // Branch-free form of the disk rejection loop in sample_stable().
  std::size_t k = 0;
  while (k < out.size()) {
    double u, v;
    square_candidate(rng, u, v);
    const bool accept = u * u + v * v < 1.0;
    out[k] = u / v;
    k += accept ? 1 : 0;
  }
}

/// Empirical P(|Z| >= t).
inline double tail_survival_estimate(const StableParams& params, double t, std::uint64_t n_samples,
                                     std::uint64_t seed) {
  if (!(t >= 0.0)) throw ParameterError("tail threshold must be non-negative");
  if (n_samples == 0) throw ParameterError("tail estimate needs at least one sample");
  CounterRng rng(seed);
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    if (std::abs(sample_stable(params, rng)) >= t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_samples);
}

inline constexpr std::uint64_t kMinCalibrationSamples = 1'000'000;

/// 0.75 quantile of the standard normal.
inline constexpr double kNormalQ75 = 0.67448975019608174;

/// Closed-form Med_p where one exists: Cauchy (p=1) and N(0, 2) (p=2).
inline std::optional<double> closed_form_med_p(double p) {
  if (p == 1.0) return 1.0;
  if (p == 2.0) return std::numbers::sqrt2 * kNormalQ75;
  return std::nullopt;
}

/// Median of |Z| for Z ~ Stab(p), by Monte Carlo over `n_samples` draws.
inline double med_p(const StableParams& params, std::uint64_t seed, std::uint64_t n_samples) {
  if (auto exact = closed_form_med_p(params.p())) return *exact;
  if (n_samples < kMinCalibrationSamples) {
    throw CalibrationError("Med_p calibration needs at least " +
                           std::to_string(kMinCalibrationSamples) + " samples, got " +
                           std::to_string(n_samples));
  }
  CounterRng rng(seed);
  std::vector<double> draws(n_samples);
  for (double& x : draws) x = std::abs(sample_stable(params, rng));
  return median_inplace(draws);
}

struct MedPEntry {
  double med_p = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t n_samples = 0;

  friend bool operator==(const MedPEntry&, const MedPEntry&) = default;
};

/// Calibrated Med_p values keyed by p, persisted as
/// `p <TAB> med_p <TAB> seed <TAB> n_samples` lines.
///
/// p = 1 and p = 2 are always answered from the closed form; the table only
/// holds Monte Carlo calibrations.
class MedPTable {
 public:
  std::optional<double> lookup(double p) const {
    if (auto exact = closed_form_med_p(p)) return exact;
    auto it = entries_.find(p);
    if (it == entries_.end()) return std::nullopt;
    return it->second.med_p;
  }

  double require(double p) const {
    if (auto v = lookup(p)) return *v;
    throw CalibrationError("no Med_p calibration for p=" + std::to_string(p) +
                           "; run the calibrate command first");
  }

  /// Calibrates p (if not already present with the same provenance) and
  /// returns the stored value.
  double calibrate(const StableParams& params, std::uint64_t seed, std::uint64_t n_samples) {
    const double p = params.p();
    if (closed_form_med_p(p)) return *closed_form_med_p(p);
    auto it = entries_.find(p);
    if (it != entries_.end() && it->second.seed == seed && it->second.n_samples == n_samples) {
      return it->second.med_p;
    }
    const double value = med_p(params, seed, n_samples);
    entries_[p] = MedPEntry{value, seed, n_samples};
    return value;
  }

  void insert(double p, const MedPEntry& entry) {
    StableParams checked(p);
    if (!(entry.med_p > 0.0)) throw CalibrationError("Med_p entries must be positive");
    entries_[checked.p()] = entry;
  }

  const std::map<double, MedPEntry>& entries() const { return entries_; }

  std::string to_text() const {
    std::string out;
    for (const auto& [p, e] : entries_) {
      out += format_double(p) + '\t' + format_double(e.med_p) + '\t' + std::to_string(e.seed) +
             '\t' + std::to_string(e.n_samples) + '\n';
    }
    return out;
  }

  static MedPTable from_text(const std::string& text) {
    MedPTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> fields;
      std::size_t start = 0;
      for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
        fields.push_back(line.substr(start, tab - start));
      }
      fields.push_back(line.substr(start));
      if (fields.size() != 4) {
        throw CalibrationError("Med_p table line " + std::to_string(line_no) +
                               ": expected 4 tab-separated fields");
      }
      try {
        table.insert(std::stod(fields[0]),
                     MedPEntry{std::stod(fields[1]), std::stoull(fields[2]), std::stoull(fields[3])});
      } catch (const std::logic_error&) {
        throw CalibrationError("Med_p table line " + std::to_string(line_no) + ": bad number");
      }
    }
    return table;
  }

  static MedPTable load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open Med_p table " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write Med_p table " + path);
    out << to_text();
    if (!out) throw IoError("write failed for " + path);
  }

 private:
  static std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }

  std::map<double, MedPEntry> entries_;
};

}  // namespace ade
