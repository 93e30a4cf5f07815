// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <malloc.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ade/harness.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
namespace h = ade::harness;
namespace t = ade::testing;
using ade::CounterRng;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ade::PointSet gaussian_points(std::size_t n, std::size_t d, CounterRng rng) {
  ade::PointSet pts{n, d, std::vector<double>(n * d)};
  ade::fill_normal(rng, pts.values);
  return pts;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "ade_acceptance";
  fs::create_directories(dir);
  return dir;
}

// 1 -------------------------------------------------------------------------
Outcome attack_separation() {
  const auto t0 = Clock::now();
  h::AttackOptions opt;
  opt.oracle = ade::DistanceOracle::Kind::kNaiveJl;
  opt.d = 2000;
  opt.k = 100;
  opt.schedule = {2000, 50};
  opt.reps = 5;
  opt.seed = 1;
  std::ostringstream log;
  const auto res = h::run_attack_experiment(opt, log);
  const double final_adaptive = res.summary.back().adaptive_median;
  double lo = 1e300, hi = -1e300;
  for (const auto& row : res.summary) {
    lo = std::min(lo, row.random_median);
    hi = std::max(hi, row.random_median);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = res.summary.back().round == 2000 && final_adaptive > 2.0 && lo >= 0.8 && hi <= 1.2 && secs < 120.0;
  o.detail = "adaptive median ratio at round 2000 = " + fmt(final_adaptive) + " (> 2), random median range [" +
             fmt(lo) + ", " + fmt(hi) + "] (within [0.8, 1.2]), " + fmt(secs, 1) + " s (< 120)";
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome attack_defense() {
  const auto t0 = Clock::now();
  h::AttackOptions opt;
  opt.oracle = ade::DistanceOracle::Kind::kAde;
  opt.d = 2000;
  opt.k = 100;
  opt.epsilon = 0.25;
  opt.delta = 0.01;
  opt.l_cap = 64;
  opt.schedule = {2000, 50};
  opt.reps = 5;
  opt.seed = 2;
  std::ostringstream log;
  const auto res = h::run_attack_experiment(opt, log);
  double lo = 1e300, hi = -1e300;
  for (const auto* traces : {&res.adaptive, &res.random}) {
    for (const auto& tr : *traces) {
      for (const auto& e : tr.evals) {
        lo = std::min(lo, e.ratio);
        hi = std::max(hi, e.ratio);
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = lo >= 0.7 && hi <= 1.3 && secs < 300.0;
  o.detail = res.descriptor + ": every ratio over 5 reps in [" + fmt(lo) + ", " + fmt(hi) +
             "] (within [0.7, 1.3]), " + fmt(secs, 1) + " s (< 300)";
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome non_adaptive_accuracy() {
  Outcome o{true, ""};
  for (double p : {1.0, 2.0}) {
    const auto t0 = Clock::now();
    const CounterRng root = CounterRng(3).split("p", static_cast<std::uint64_t>(p));
    int failures = 0;
    const int trials = 500;
    for (int k = 0; k < trials; ++k) {
      const CounterRng trial = root.split("trial", k);
      const auto pts = gaussian_points(16, 64, trial.split("data", 0));
      const auto q = gaussian_points(1, 64, trial.split("query-point", 0)).values;
      ade::AdeParams params;
      params.p = p;
      params.epsilon = 0.25;
      params.delta = 0.1;
      params.master_seed = trial.split("build", 0).key();
      const auto s = ade::build(pts, params);
      CounterRng qrng = trial.split("query", 0);
      const auto est = ade::query(s, q, qrng).estimates;
      bool bad = false;
      for (std::size_t i = 0; i < pts.n; ++i) {
        const double exact = t::naive_distance(q.data(), pts.row(i).data(), 64, p);
        bad |= !(est[i] >= 0.75 * exact && est[i] <= 1.25 * exact);
      }
      failures += bad;
    }
    const double rate = failures / double(trials);
    const double secs = seconds_since(t0);
    o.pass = o.pass && rate <= 0.13 && secs < 180.0;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("p=") + fmt(p, 0) + ": failure rate " + fmt(rate) +
                " (<= 0.13), " + fmt(secs, 1) + " s (< 180)";
  }
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome representativeness_audit() {
  const fs::path dir = scratch_dir();
  int passed = 0;
  std::size_t worst_margin = SIZE_MAX;
  std::string note;
  for (int b = 0; b < 20; ++b) {
    const auto pts = gaussian_points(16, 64, CounterRng(4).split("data", b));
    const std::string data = (dir / "audit_data.adev").string();
    const auto bytes = h::encode_binary_points(pts);
    ade::write_file_atomic(data, std::span<const char>(reinterpret_cast<const char*>(bytes.data()), bytes.size()));

    h::BuildOptions bo;
    bo.dataset = data;
    bo.out = (dir / "audit.ades").string();
    bo.params.p = 2.0;
    bo.params.epsilon = 0.25;
    bo.params.master_seed = CounterRng(4).split("build", b).key();
    std::ostringstream log;
    h::cmd_build(bo, log);

    h::AuditOptions ao;
    ao.structure = bo.out;
    ao.n_directions = 200;
    ao.seed = static_cast<std::uint64_t>(b) + 1;
    ao.out = (dir / "audit.csv").string();
    if (h::cmd_audit(ao, log) == h::kExitOk) ++passed;

    const auto s = ade::load(bo.out);
    CounterRng rng = CounterRng(ao.seed).split("audit", 0);
    const auto rep = ade::audit_representativeness(s, 200, rng);
    worst_margin = std::min(worst_margin, rep.min_count() - std::min(rep.min_count(), rep.required()));
    note = "l=" + std::to_string(rep.l) + ", required " + std::to_string(rep.required());
  }
  Outcome o;
  o.pass = passed == 20;
  o.detail = std::to_string(passed) + "/20 builds pass the 200-direction audit (" + note +
             ", smallest surplus over the requirement " + std::to_string(worst_margin) + ")";
  return o;
}

// 5 -------------------------------------------------------------------------
Outcome stability_law() {
  Outcome o{true, ""};
  const std::size_t n = 100000;
  for (double p : {0.5, 1.0, 1.5, 2.0}) {
    const ade::StableParams sp(p);
    CounterRng wrng = CounterRng(5).split("weights", static_cast<std::uint64_t>(p * 4));
    std::vector<double> v(6);
    ade::fill_normal(wrng, v);
    const double norm = ade::lp_norm(v, p);
    CounterRng a = CounterRng(5).split("lhs", static_cast<std::uint64_t>(p * 4));
    CounterRng b = CounterRng(5).split("rhs", static_cast<std::uint64_t>(p * 4));
    std::vector<double> lhs(n), rhs(n);
    for (auto& s : lhs) {
      s = 0.0;
      for (double vi : v) s += vi * ade::sample_stable(sp, a);
    }
    for (auto& s : rhs) s = norm * ade::sample_stable(sp, b);
    const double stat = t::ks_statistic(lhs, rhs);
    const double crit = t::ks_critical(1e-3, n, n);
    o.pass = o.pass && stat < crit;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("p=") + fmt(p, 1) + ": D=" + fmt(stat, 4);
  }
  o.detail += " (critical " + fmt(t::ks_critical(1e-3, n, n), 4) + ")";
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome tail_law() {
  struct Sweep {
    double p;
    std::vector<double> ts;
  };
  const std::vector<Sweep> sweeps{{0.5, {100, 200, 400, 800}}, {1.0, {10, 20, 40, 80}}, {1.5, {10, 20, 40}}};
  Outcome o{true, ""};
  for (const auto& sw : sweeps) {
    const ade::StableParams sp(sw.p);
    CounterRng rng = CounterRng(6).split("tail", static_cast<std::uint64_t>(sw.p * 2));
    std::vector<std::size_t> hits(sw.ts.size(), 0);
    for (int k = 0; k < 1'000'000; ++k) {
      const double z = std::abs(ade::sample_stable(sp, rng));
      for (std::size_t i = 0; i < sw.ts.size(); ++i) hits[i] += z >= sw.ts[i];
    }
    const double target = std::pow(2.0, sw.p);
    std::string ratios;
    for (std::size_t i = 0; i + 1 < sw.ts.size(); ++i) {
      const double ratio = double(hits[i]) / double(std::max<std::size_t>(1, hits[i + 1]));
      o.pass = o.pass && std::abs(ratio / target - 1.0) <= 0.3;
      ratios += (i ? "," : "") + fmt(ratio, 2);
    }
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("p=") + fmt(sw.p, 1) + " ratios " + ratios +
                " vs " + fmt(target, 2);
  }
  return o;
}

// 7 -------------------------------------------------------------------------
Outcome median_threshold() {
  // Five levels: below a, a, strictly inside, b, above b, with [a, b] = [0, 1].
  const std::array<double, 5> level{-1.0, 0.0, 0.5, 1.0, 2.0};
  std::size_t checked = 0, counterexamples = 0;
  std::vector<double> v;
  for (std::size_t r = 1; r <= 9; ++r) {
    std::size_t total = 1;
    for (std::size_t k = 0; k < r; ++k) total *= level.size();
    v.resize(r);
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code, inside = 0;
      for (std::size_t k = 0; k < r; ++k, c /= level.size()) {
        v[k] = level[c % level.size()];
        inside += v[k] >= 0.0 && v[k] <= 1.0;
      }
      if (10 * inside < 6 * r) continue;
      ++checked;
      const double med = ade::median_inplace(v);
      counterexamples += !(med >= 0.0 && med <= 1.0);
    }
  }
  Outcome o;
  o.pass = counterexamples == 0 && checked > 0;
  o.detail = std::to_string(checked) + " qualifying multisets for r <= 9, " + std::to_string(counterexamples) +
             " counterexamples";
  return o;
}

// 8 -------------------------------------------------------------------------
struct LinearInstance {
  ade::SketchMatrix matrix;
  std::vector<double> answer(std::span<const double> q) const { return ade::apply(matrix, q).values; }
};

struct ConstantInstance {
  double value;
  std::vector<double> answer(std::span<const double>) const { return {value}; }
};

Outcome robustify_equivalence() {
  const LinearInstance inst{ade::gen_sketch(ade::SketchKind::gaussian_inv_m(), 5, 12, CounterRng(8))};
  ade::Robustified<LinearInstance> single({inst}, ade::Aggregator::kMedian, 1);
  CounterRng qrng(81), wrng(82);
  int identical = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> q(12);
    ade::fill_normal(qrng, q);
    identical += single.answer(q, wrng) == inst.answer(q);
  }

  ade::Robustified<ConstantInstance> triple({{1.0}, {2.0}, {3.0}}, ade::Aggregator::kMedian, 3);
  std::map<std::vector<std::size_t>, int> triples;
  std::map<double, int> medians;
  CounterRng rng(83);
  const int draws = 100000;
  const std::vector<double> q{0.0};
  for (int k = 0; k < draws; ++k) {
    const auto ans = triple.answer_detailed(q, rng);
    ++triples[ans.indices];
    ++medians[ans.aggregate[0]];
  }
  // Enumeration oracle: 27 equally likely triples; median law 7/27, 13/27, 7/27.
  std::map<double, double> median_law;
  double worst_z = 0.0;
  std::size_t cells = 0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 3; ++c) {
        std::array<double, 3> vals{double(a + 1), double(b + 1), double(c + 1)};
        std::sort(vals.begin(), vals.end());
        median_law[vals[1]] += 1.0 / 27.0;
        const double pcell = 1.0 / 27.0;
        const double sigma = std::sqrt(draws * pcell * (1 - pcell));
        const auto it = triples.find({a, b, c});
        const int seen = it == triples.end() ? 0 : it->second;
        worst_z = std::max(worst_z, std::abs(seen - draws * pcell) / sigma);
        ++cells;
      }
  for (const auto& [v, prob] : median_law) {
    const double sigma = std::sqrt(draws * prob * (1 - prob));
    worst_z = std::max(worst_z, std::abs(medians[v] - draws * prob) / sigma);
  }
  Outcome o;
  o.pass = identical == 100 && triples.size() == 27 && cells == 27 && worst_z <= 3.0;
  o.detail = "l=1,r=1 identical on " + std::to_string(identical) + "/100 queries; l=3,r=3 worst deviation " +
             fmt(worst_z, 2) + " sigma over 27 triples and 3 median values (<= 3)";
  return o;
}

// 9 -------------------------------------------------------------------------
std::size_t heap_in_use() {
  const struct mallinfo2 mi = mallinfo2();
  return mi.uordblks + mi.hblkhd;
}

Outcome complexity_scaling() {
  h::BenchOptions opt;
  opt.ns = {1000, 2000, 4000};
  opt.ds = {32};
  opt.queries = 31;
  opt.seed = 9;
  const auto rows = h::run_bench(opt);
  bool pass = true;
  std::string detail = "query_ms";
  for (const auto& r : rows) detail += " " + fmt(r.query_ms, 3);
  detail += "; ratios";
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const double ratio = rows[i + 1].query_ms / rows[i].query_ms;
    pass = pass && ratio >= 1.6 && ratio <= 2.6;
    detail += " " + fmt(ratio, 2);
  }
  detail += " (in [1.6, 2.6]); memory";
  for (const auto& r : rows) {
    const double analytic = 8.0 * double(r.l * r.m * r.d + r.n * r.m * r.l);
    // Measured heap growth while a structure of this shape is alive.
    const auto pts = gaussian_points(r.n, r.d, CounterRng(91).split(r.n));
    ade::AdeParams params;
    params.epsilon = opt.epsilon;
    params.delta = opt.delta;
    const std::size_t before = heap_in_use();
    const auto s = ade::build(pts, params);
    const double measured = double(heap_in_use()) - double(before);
    const double fp_err = std::abs(double(r.footprint_bytes) / analytic - 1.0);
    const double heap_err = std::abs(measured / analytic - 1.0);
    pass = pass && fp_err <= 0.1 && heap_err <= 0.1 && s.rows() == r.m;
    detail += " n=" + std::to_string(r.n) + ": footprint/analytic " + fmt(r.footprint_bytes / analytic, 4) +
              ", heap/analytic " + fmt(measured / analytic, 4);
  }
  return {pass, detail + " (within 10%)"};
}

// 10 ------------------------------------------------------------------------
Outcome persistence_round_trip() {
  ade::MedPTable table;
  table.insert(0.5, {t::kMedP050, 1, 10'000'000});
  table.insert(1.5, {t::kMedP150, 1, 10'000'000});
  const std::array<double, 4> ps{0.5, 1.0, 1.5, 2.0};
  const fs::path file = scratch_dir() / "roundtrip.ades";
  int identical = 0;
  CounterRng rng(10);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + ade::uniform_index(rng, 12);
    const std::size_t d = 1 + ade::uniform_index(rng, 20);
    ade::AdeParams params;
    params.p = ps[ade::uniform_index(rng, ps.size())];
    params.epsilon = 0.3 + 0.6 * ade::uniform_open01(rng);
    params.delta = 0.01 + 0.5 * ade::uniform_open01(rng);
    params.c_l = 0.2 + ade::uniform_open01(rng);
    params.master_seed = rng();
    params.l_cap = 40;
    const auto s = ade::build(gaussian_points(n, d, rng.split("data", k)), params, table);
    ade::save(s, file.string());
    const auto back = ade::load(file.string());
    const std::vector<double> q = gaussian_points(1, d, rng.split("q", k)).values;
    CounterRng a(k), b(k);
    const bool same = back == s && ade::serialize(back) == ade::serialize(s) &&
                      ade::query(s, q, a).estimates == ade::query(back, q, b).estimates;
    identical += same;
  }
  return {identical == 100, std::to_string(identical) + "/100 random structures round-trip bit-identically"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  // Hundreds of back-to-back builds: keep freed pages in the heap instead of
  // returning them to the kernel and faulting them in again.
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_MMAP_THRESHOLD, 1 << 30);

  const std::vector<Criterion> all{
      {1, "attack separation (naive JL)", attack_separation},
      {2, "defense (ADE oracle)", attack_defense},
      {3, "non-adaptive accuracy", non_adaptive_accuracy},
      {4, "representativeness audit", representativeness_audit},
      {5, "stability law (KS)", stability_law},
      {6, "tail law", tail_law},
      {7, "median threshold", median_threshold},
      {8, "robustify degenerate equivalence", robustify_equivalence},
      {9, "complexity scaling", complexity_scaling},
      {10, "persistence round trip", persistence_round_trip},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] criterion %d: %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / "ade_acceptance", ec);
  return failed == 0 ? 0 : 1;
}
