#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ade/ade.hpp"
#include "ade/adversary.hpp"
#include "ade/error.hpp"
#include "ade/persist.hpp"
#include "ade/stable.hpp"

namespace ade::harness {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitVerification = 2,
  kExitIngestion = 3,
  kExitCapacity = 4,
};

/// Shortest decimal that reads back to the same double.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Dataset ingestion

struct Dataset {
  PointSet points;
  std::string source;
  std::string format;  // "csv" or "adev"
};

inline constexpr char kVectorMagic[4] = {'A', 'D', 'E', 'V'};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_number(std::string_view field, double& out) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

/// Parses comma-separated rows. A first line that is not entirely numeric is
/// treated as a header; blank lines and `#` comments are skipped. Errors name
/// the 1-based line number.
inline PointSet parse_csv_points(std::string_view text, bool allow_empty = false) {
  PointSet pts;
  std::size_t line_no = 0;
  bool seen_content = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = detail::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = detail::split_commas(line);
    std::vector<double> row(fields.size());
    std::optional<std::size_t> bad;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!detail::parse_number(fields[c], row[c])) {
        bad = c;
        break;
      }
    }
    const bool first = !seen_content;
    seen_content = true;
    if (bad) {
      if (first) continue;  // header
      throw IngestionError("row " + std::to_string(line_no) + ": field " + std::to_string(*bad + 1) +
                           " is not a number: '" + std::string(detail::trim(fields[*bad])) + "'");
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c])) {
        throw IngestionError("row " + std::to_string(line_no) + ": field " + std::to_string(c + 1) +
                             " is not finite");
      }
    }
    if (pts.n == 0) {
      pts.d = row.size();
    } else if (row.size() != pts.d) {
      throw IngestionError("row " + std::to_string(line_no) + ": expected " + std::to_string(pts.d) +
                           " fields, found " + std::to_string(row.size()));
    }
    pts.values.insert(pts.values.end(), row.begin(), row.end());
    ++pts.n;
    if (end == text.size()) break;
  }
  if (pts.n == 0 && !allow_empty) throw IngestionError("dataset has no rows");
  return pts;
}

inline PointSet parse_binary_points(std::span<const std::uint8_t> bytes, bool allow_empty = false) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kVectorMagic, 4) != 0) {
    throw IngestionError("not an ADEV vector file");
  }
  auto read_u64 = [&](std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  PointSet pts;
  pts.n = static_cast<std::size_t>(read_u64(4));
  pts.d = static_cast<std::size_t>(read_u64(12));
  const std::size_t count = checked_mul(pts.n, pts.d);
  if (count == SIZE_MAX || checked_mul(count, 8) != bytes.size() - 20) {
    throw IngestionError("ADEV file length does not match n=" + std::to_string(pts.n) +
                         ", d=" + std::to_string(pts.d));
  }
  pts.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) pts.values[k] = std::bit_cast<double>(read_u64(20 + 8 * k));
  for (std::size_t i = 0; i < pts.n; ++i) {
    for (double x : pts.row(i)) {
      if (!std::isfinite(x)) throw IngestionError("row " + std::to_string(i + 1) + ": value is not finite");
    }
  }
  if (pts.n == 0 && !allow_empty) throw IngestionError("dataset has no rows");
  if (pts.n > 0 && pts.d == 0) throw IngestionError("dataset has zero dimension");
  return pts;
}

inline std::vector<std::uint8_t> encode_binary_points(const PointSet& pts) {
  std::vector<std::uint8_t> out(kVectorMagic, kVectorMagic + 4);
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u64(pts.n);
  put_u64(pts.d);
  for (double x : pts.values) put_u64(std::bit_cast<std::uint64_t>(x));
  return out;
}

/// Loads CSV or ADEV (detected by magic bytes).
inline Dataset load_dataset(const std::string& path, bool allow_empty = false) {
  const auto bytes = read_file_bytes(path);
  Dataset ds;
  ds.source = path;
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kVectorMagic, 4) == 0) {
    ds.format = "adev";
    ds.points = parse_binary_points(bytes, allow_empty);
  } else {
    ds.format = "csv";
    ds.points = parse_csv_points(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                 allow_empty);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Output headers

/// Ordered key=value pairs describing a run; rendered as `#` comment lines.
class RunHeader {
 public:
  explicit RunHeader(std::string command) { add("command", std::move(command)); }

  RunHeader& add(std::string key, std::string value) {
    items_.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  RunHeader& add(std::string key, double value) { return add(std::move(key), fmt_double(value)); }
  RunHeader& add(std::string key, std::uint64_t value) { return add(std::move(key), std::to_string(value)); }

  std::string render() const {
    std::string out = "# ade-tool " + std::string(kToolVersion) + "\n";
    for (const auto& [k, v] : items_) out += "# " + k + "=" + v + "\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

inline void add_params(RunHeader& h, const AdeParams& p) {
  h.add("p", p.p).add("epsilon", p.epsilon).add("delta", p.delta);
  h.add("c_m", p.c_m).add("c_l", p.c_l).add("c_r", p.c_r);
  h.add("l_cap", static_cast<std::uint64_t>(p.l_cap));
  h.add("master_seed", p.master_seed);
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOptions {
  std::vector<double> ps;
  std::uint64_t seed = 1;
  std::uint64_t n_samples = 10'000'000;
  std::string table_path;
};

inline int cmd_calibrate(const CalibrateOptions& opt, std::ostream& log) {
  MedPTable table;
  if (std::filesystem::exists(opt.table_path)) table = MedPTable::load(opt.table_path);
  for (double p : opt.ps) {
    const double v = table.calibrate(StableParams(p), opt.seed, opt.n_samples);
    log << "p=" << fmt_double(p) << " med_p=" << fmt_double(v) << "\n";
  }
  write_file_atomic(opt.table_path, table.to_text());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// build

struct BuildOptions {
  std::string dataset;
  std::string out;
  AdeParams params;
  std::string medp_table;  // optional
};

inline int cmd_build(const BuildOptions& opt, std::ostream& log) {
  const Dataset ds = load_dataset(opt.dataset);
  MedPTable table;
  if (!opt.medp_table.empty()) table = MedPTable::load(opt.medp_table);
  const AdeStructure s = build(ds.points, opt.params, table);
  save(s, opt.out);
  const Sizes sz = derive_sizes(opt.params, ds.points.d, ds.points.n);
  log << "n=" << ds.points.n << " d=" << ds.points.d << " m=" << s.rows() << " l=" << s.sketch_count()
      << " r=" << sz.r << " footprint_bytes=" << s.footprint_bytes() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// query

struct QueryOptions {
  std::string structure;
  std::string queries;
  std::string out;
  std::uint64_t seed = 1;
  std::string verify_dataset;  // optional: enables brute-force verification
};

inline int cmd_query(const QueryOptions& opt, std::ostream& log) {
  const AdeStructure s = load(opt.structure);
  const Dataset qs = load_dataset(opt.queries, /*allow_empty=*/true);
  if (qs.points.n > 0 && qs.points.d != s.dim()) {
    throw DimensionError("queries have dimension " + std::to_string(qs.points.d) + ", structure has " +
                         std::to_string(s.dim()));
  }
  std::optional<Dataset> data;
  if (!opt.verify_dataset.empty()) {
    data = load_dataset(opt.verify_dataset);
    if (data->points.n != s.points() || data->points.d != s.dim()) {
      throw DimensionError("verification dataset does not match the structure's shape");
    }
  }

  RunHeader h("query");
  h.add("structure", opt.structure).add("queries", opt.queries).add("seed", opt.seed);
  add_params(h, s.params());
  h.add("n", static_cast<std::uint64_t>(s.points())).add("d", static_cast<std::uint64_t>(s.dim()));
  h.add("m", static_cast<std::uint64_t>(s.rows())).add("l", static_cast<std::uint64_t>(s.sketch_count()));
  h.add("r", static_cast<std::uint64_t>(s.samples_per_query()));
  std::string out = h.render() + "point_index,estimate\n";

  CounterRng rng = CounterRng(opt.seed).split("query", 0);
  const double eps = s.params().epsilon;
  std::size_t violations = 0;
  std::vector<double> diff(s.dim());
  for (std::size_t k = 0; k < qs.points.n; ++k) {
    const auto q = qs.points.row(k);
    const QueryResult res = query(s, q, rng);
    out += "# query=" + std::to_string(k) + " sampled_indices=";
    for (std::size_t t = 0; t < res.sampled_indices.size(); ++t) {
      out += (t ? ";" : "") + std::to_string(res.sampled_indices[t]);
    }
    out += "\n";
    for (std::size_t i = 0; i < res.estimates.size(); ++i) {
      out += std::to_string(i) + "," + fmt_double(res.estimates[i]) + "\n";
      if (data) {
        const auto x = data->points.row(i);
        for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = q[c] - x[c];
        const double exact = lp_norm(diff, s.params().p);
        const double est = res.estimates[i];
        if (!(est >= (1.0 - eps) * exact && est <= (1.0 + eps) * exact)) {
          ++violations;
          log << "violation: query " << k << " point " << i << " estimate " << fmt_double(est) << " exact "
              << fmt_double(exact) << "\n";
        }
      }
    }
  }
  write_file_atomic(opt.out, out);
  if (data) log << "verified " << qs.points.n * s.points() << " estimates, " << violations << " violations\n";
  return violations == 0 ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------------------
// audit

struct AuditOptions {
  std::string structure;
  std::string out;  // optional report path
  std::size_t n_directions = 200;
  std::uint64_t seed = 1;
  double threshold = 0.9;
};

inline std::string render_audit(const AuditReport& rep, const RunHeader& h) {
  std::string out = h.render() + "direction,count,l\n";
  for (std::size_t t = 0; t < rep.counts.size(); ++t) {
    out += std::to_string(t) + "," + std::to_string(rep.counts[t]) + "," + std::to_string(rep.l) + "\n";
  }
  out += "# min_count=" + std::to_string(rep.min_count()) + " mean_count=" + fmt_double(rep.mean_count()) +
         " required=" + std::to_string(rep.required()) + " passed=" + (rep.passed() ? "true" : "false") + "\n";
  return out;
}

inline int cmd_audit(const AuditOptions& opt, std::ostream& log) {
  const AdeStructure s = load(opt.structure);
  CounterRng rng = CounterRng(opt.seed).split("audit", 0);
  const AuditReport rep = audit_representativeness(s, opt.n_directions, rng, opt.threshold);
  RunHeader h("audit");
  h.add("structure", opt.structure).add("directions", static_cast<std::uint64_t>(opt.n_directions));
  h.add("threshold", opt.threshold).add("seed", opt.seed);
  add_params(h, s.params());
  if (!opt.out.empty()) write_file_atomic(opt.out, render_audit(rep, h));
  log << "l=" << rep.l << " min_count=" << rep.min_count() << " mean_count=" << fmt_double(rep.mean_count())
      << " required=" << rep.required() << (rep.passed() ? " PASS" : " FAIL") << "\n";
  return rep.passed() ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------------------
// attack

struct AttackOptions {
  DistanceOracle::Kind oracle = DistanceOracle::Kind::kNaiveJl;
  std::size_t d = 2000;
  std::size_t k = 100;
  /// ADE oracle parameters. c_m <= 0 means "pick c_m so that m = k".
  double epsilon = 0.25;
  double delta = 0.01;
  double c_m = 0.0;
  double c_l = 1.0;
  double c_r = 3.0;
  std::size_t l_cap = 64;
  AttackConfig schedule;
  std::size_t reps = 5;
  std::uint64_t seed = 1;
  std::string out_dir;  // optional; no files when empty
};

inline DistanceOracle::Kind parse_oracle_kind(std::string_view name) {
  if (name == "naive") return DistanceOracle::Kind::kNaiveJl;
  if (name == "ade") return DistanceOracle::Kind::kAde;
  if (name == "exact") return DistanceOracle::Kind::kExact;
  throw ParameterError("unknown oracle kind '" + std::string(name) + "' (expected naive, ade or exact)");
}

inline AdeParams attack_ade_params(const AttackOptions& opt, std::uint64_t master_seed) {
  AdeParams p;
  p.p = 2.0;
  p.epsilon = opt.epsilon;
  p.delta = opt.delta;
  p.c_m = opt.c_m > 0.0 ? opt.c_m : static_cast<double>(opt.k) * opt.epsilon * opt.epsilon;
  p.c_l = opt.c_l;
  p.c_r = opt.c_r;
  p.l_cap = opt.l_cap;
  p.master_seed = master_seed;
  return p;
}

inline std::unique_ptr<DistanceOracle> make_attack_oracle(const AttackOptions& opt, CounterRng rep_stream) {
  const PointSet db = attack_database(opt.d);
  switch (opt.oracle) {
    case DistanceOracle::Kind::kExact: return std::make_unique<ExactOracle>(db);
    case DistanceOracle::Kind::kNaiveJl: return std::make_unique<NaiveJlOracle>(db, opt.k, rep_stream.split("sketch", 0));
    case DistanceOracle::Kind::kAde:
      return std::make_unique<AdeOracle>(build(db, attack_ade_params(opt, rep_stream.split("sketch", 0).key())),
                                         rep_stream.split("oracle-queries", 0));
  }
  throw ParameterError("unknown oracle kind");
}

struct AttackSummaryRow {
  std::size_t round = 0;
  double adaptive_median = 0.0;
  double random_median = 0.0;
};

struct AttackResult {
  std::vector<AttackTrace> adaptive;
  std::vector<AttackTrace> random;
  std::vector<AttackSummaryRow> summary;
  std::string descriptor;
};

inline std::string render_trace(const AttackTrace& t, const RunHeader& h) {
  std::string out = h.render() + "round,w,acc_norm_true,acc_norm_reported,ratio\n";
  for (const auto& e : t.evals) {
    out += std::to_string(e.round) + "," + std::to_string(e.w) + "," + fmt_double(e.acc_norm_true) + "," +
           fmt_double(e.acc_norm_reported) + "," + fmt_double(e.ratio) + "\n";
  }
  return out;
}

inline std::vector<AttackSummaryRow> summarize(const std::vector<AttackTrace>& adaptive,
                                               const std::vector<AttackTrace>& random) {
  std::vector<AttackSummaryRow> rows;
  if (adaptive.empty()) return rows;
  const std::size_t evals = adaptive.front().evals.size();
  std::vector<double> a, b;
  for (std::size_t e = 0; e < evals; ++e) {
    a.clear();
    b.clear();
    for (const auto& t : adaptive) a.push_back(t.evals[e].ratio);
    for (const auto& t : random) b.push_back(t.evals[e].ratio);
    rows.push_back({adaptive.front().evals[e].round, median(a), b.empty() ? 0.0 : median(b)});
  }
  return rows;
}

/// Runs `reps` independent repetitions of the adaptive attack and the
/// random-probe baseline, each against a freshly drawn oracle.
inline AttackResult run_attack_experiment(const AttackOptions& opt, std::ostream& log) {
  if (opt.reps == 0) throw ParameterError("attack needs at least one repetition");
  AttackResult res;
  RunHeader h("attack");
  h.add("oracle", kind_name(opt.oracle)).add("d", static_cast<std::uint64_t>(opt.d));
  h.add("k", static_cast<std::uint64_t>(opt.k)).add("rounds", static_cast<std::uint64_t>(opt.schedule.n_rounds));
  h.add("eval_every", static_cast<std::uint64_t>(opt.schedule.eval_every));
  h.add("reps", static_cast<std::uint64_t>(opt.reps)).add("seed", opt.seed);
  if (opt.oracle == DistanceOracle::Kind::kAde) add_params(h, attack_ade_params(opt, 0));

  const CounterRng root(opt.seed);
  for (std::size_t rep = 0; rep < opt.reps; ++rep) {
    const CounterRng rep_stream = root.split("rep", rep);
    auto oracle = make_attack_oracle(opt, rep_stream);
    res.descriptor = oracle->descriptor();
    res.adaptive.push_back(run_attack(*oracle, opt.schedule, rep_stream.split("adaptive-probes", 0)));
    res.random.push_back(random_query_baseline(*oracle, opt.schedule, rep_stream.split("random-probes", 0)));
    const auto& a = res.adaptive.back().evals.back();
    const auto& b = res.random.back().evals.back();
    log << "rep " << rep << " " << res.descriptor << ": final adaptive ratio " << fmt_double(a.ratio)
        << ", random ratio " << fmt_double(b.ratio) << "\n";
    if (!opt.out_dir.empty()) {
      RunHeader th = h;
      th.add("rep", static_cast<std::uint64_t>(rep)).add("oracle_descriptor", res.descriptor);
      write_file_atomic(opt.out_dir + "/trace_adaptive_rep" + std::to_string(rep) + ".csv",
                        render_trace(res.adaptive.back(), RunHeader(th).add("probes", "adaptive")));
      write_file_atomic(opt.out_dir + "/trace_random_rep" + std::to_string(rep) + ".csv",
                        render_trace(res.random.back(), RunHeader(th).add("probes", "random")));
    }
  }
  res.summary = summarize(res.adaptive, res.random);
  if (!opt.out_dir.empty()) {
    std::string out = h.render() + "round,adaptive_median_ratio,random_median_ratio\n";
    for (const auto& r : res.summary) {
      out += std::to_string(r.round) + "," + fmt_double(r.adaptive_median) + "," + fmt_double(r.random_median) + "\n";
    }
    write_file_atomic(opt.out_dir + "/summary.csv", out);
  }
  return res;
}

inline int cmd_attack(const AttackOptions& opt, std::ostream& log) {
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);
  run_attack_experiment(opt, log);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::vector<std::size_t> ns{1000, 2000, 4000};
  std::vector<std::size_t> ds{32};
  double p = 2.0;
  double epsilon = 0.5;
  double delta = 0.1;
  std::size_t queries = 15;
  std::uint64_t seed = 1;
  std::string out;
};

struct BenchRow {
  std::size_t n = 0, d = 0, m = 0, l = 0, r = 0;
  double build_ms = 0.0;
  double query_ms = 0.0;
  std::size_t footprint_bytes = 0;
};

/// Times one build and the median of `queries` query calls per grid cell.
inline BenchRow bench_cell(std::size_t n, std::size_t d, const BenchOptions& opt, const MedPTable& table) {
  using clock = std::chrono::steady_clock;
  const CounterRng cell = CounterRng(opt.seed).split("bench", n * 1'000'003ULL + d);
  PointSet pts{n, d, std::vector<double>(n * d)};
  CounterRng data_rng = cell.split("data", 0);
  fill_normal(data_rng, pts.values);
  AdeParams params;
  params.p = opt.p;
  params.epsilon = opt.epsilon;
  params.delta = opt.delta;
  params.master_seed = cell.split("build", 0).key();

  const auto t0 = clock::now();
  const AdeStructure s = build(pts, params, table);
  const auto t1 = clock::now();

  BenchRow row;
  row.n = n;
  row.d = d;
  row.m = s.rows();
  row.l = s.sketch_count();
  row.r = s.samples_per_query();
  row.build_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  row.footprint_bytes = s.footprint_bytes();

  CounterRng qrng = cell.split("queries", 0);
  std::vector<double> q(d), times;
  volatile double sink = 0.0;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, opt.queries); ++t) {
    fill_normal(qrng, q);
    const auto a = clock::now();
    const QueryResult res = query(s, q, qrng);
    const auto b = clock::now();
    sink = sink + res.estimates.front();
    times.push_back(std::chrono::duration<double, std::milli>(b - a).count());
  }
  row.query_ms = median(times);
  return row;
}

inline std::vector<BenchRow> run_bench(const BenchOptions& opt, const MedPTable& table = MedPTable{}) {
  std::vector<BenchRow> rows;
  for (std::size_t d : opt.ds) {
    for (std::size_t n : opt.ns) rows.push_back(bench_cell(n, d, opt, table));
  }
  return rows;
}

inline std::string render_bench(const std::vector<BenchRow>& rows, const BenchOptions& opt) {
  RunHeader h("bench");
  h.add("p", opt.p).add("epsilon", opt.epsilon).add("delta", opt.delta);
  h.add("queries", static_cast<std::uint64_t>(opt.queries)).add("seed", opt.seed);
  std::string out = h.render() + "n,d,m,l,r,build_ms,query_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + "," + std::to_string(r.d) + "," + std::to_string(r.m) + "," + std::to_string(r.l) +
           "," + std::to_string(r.r) + "," + fmt_double(r.build_ms) + "," + fmt_double(r.query_ms) + "\n";
  }
  return out;
}

}  // namespace ade::harness
