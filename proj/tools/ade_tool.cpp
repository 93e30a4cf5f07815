// Command-line driver: calibrate, build, query, audit, attack, bench.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ade/harness.hpp"

namespace h = ade::harness;

namespace {

void add_ade_flags(CLI::App* cmd, ade::AdeParams& p) {
  cmd->add_option("--p", p.p, "stability index; 2 selects the Gaussian path")->capture_default_str();
  cmd->add_option("--eps", p.epsilon, "accuracy epsilon in (0,1)")->capture_default_str();
  cmd->add_option("--delta", p.delta, "failure probability in (0,1)")->capture_default_str();
  cmd->add_option("--c-m", p.c_m, "constant in m = c_m / eps^2")->capture_default_str();
  cmd->add_option("--c-l", p.c_l, "constant in l")->capture_default_str();
  cmd->add_option("--c-r", p.c_r, "constant in r = c_r ln(2n/delta)")->capture_default_str();
  cmd->add_option("--l-cap", p.l_cap, "upper bound on l (0 = none)")->capture_default_str();
  cmd->add_option("--memory-cap", p.memory_cap_bytes, "memory cap in bytes")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive distance estimation: build, query, audit, attack and bench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(h::kToolVersion));

  h::CalibrateOptions cal;
  auto* c_cal = app.add_subcommand("calibrate", "calibrate Med_p for p < 2 into a table file");
  c_cal->add_option("--p", cal.ps, "stability indices")->required();
  c_cal->add_option("--seed", cal.seed)->capture_default_str();
  c_cal->add_option("--samples", cal.n_samples)->capture_default_str();
  c_cal->add_option("--out", cal.table_path, "Med_p table path (updated in place)")->required();

  h::BuildOptions bld;
  auto* c_build = app.add_subcommand("build", "build a structure from a dataset");
  c_build->add_option("--data", bld.dataset, "CSV or ADEV dataset")->required();
  c_build->add_option("--out", bld.out, "structure file")->required();
  c_build->add_option("--seed", bld.params.master_seed)->capture_default_str();
  c_build->add_option("--medp-table", bld.medp_table, "Med_p table for p not in {1, 2}");
  add_ade_flags(c_build, bld.params);

  h::QueryOptions qry;
  auto* c_query = app.add_subcommand("query", "answer queries from a structure file");
  c_query->add_option("--structure", qry.structure)->required();
  c_query->add_option("--queries", qry.queries, "CSV or ADEV query vectors")->required();
  c_query->add_option("--out", qry.out, "estimates CSV")->required();
  c_query->add_option("--seed", qry.seed)->capture_default_str();
  c_query->add_option("--verify", qry.verify_dataset, "dataset for brute-force verification");

  h::AuditOptions aud;
  auto* c_audit = app.add_subcommand("audit", "empirical representativeness audit");
  c_audit->add_option("--structure", aud.structure)->required();
  c_audit->add_option("--directions", aud.n_directions)->capture_default_str();
  c_audit->add_option("--threshold", aud.threshold)->capture_default_str();
  c_audit->add_option("--seed", aud.seed)->capture_default_str();
  c_audit->add_option("--out", aud.out, "report CSV");

  h::AttackOptions atk;
  std::string oracle_name = "naive";
  auto* c_attack = app.add_subcommand("attack", "sign-accumulation attack vs. random probes");
  c_attack->add_option("--oracle", oracle_name, "naive, ade or exact")->capture_default_str();
  c_attack->add_option("--d", atk.d)->capture_default_str();
  c_attack->add_option("--k", atk.k, "naive sketch rows")->capture_default_str();
  c_attack->add_option("--eps", atk.epsilon)->capture_default_str();
  c_attack->add_option("--delta", atk.delta)->capture_default_str();
  c_attack->add_option("--c-m", atk.c_m, "ade: constant in m (default gives m = k)");
  c_attack->add_option("--c-l", atk.c_l)->capture_default_str();
  c_attack->add_option("--c-r", atk.c_r)->capture_default_str();
  c_attack->add_option("--l-cap", atk.l_cap)->capture_default_str();
  c_attack->add_option("--rounds", atk.schedule.n_rounds)->capture_default_str();
  c_attack->add_option("--eval-every", atk.schedule.eval_every)->capture_default_str();
  c_attack->add_option("--reps", atk.reps)->capture_default_str();
  c_attack->add_option("--seed", atk.seed)->capture_default_str();
  c_attack->add_option("--out", atk.out_dir, "output directory for trace CSVs")->required();

  h::BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "build/query timing over an (n, d) grid");
  c_bench->add_option("--n", bench.ns)->capture_default_str();
  c_bench->add_option("--d", bench.ds)->capture_default_str();
  c_bench->add_option("--p", bench.p)->capture_default_str();
  c_bench->add_option("--eps", bench.epsilon)->capture_default_str();
  c_bench->add_option("--delta", bench.delta)->capture_default_str();
  c_bench->add_option("--queries", bench.queries)->capture_default_str();
  c_bench->add_option("--seed", bench.seed)->capture_default_str();
  c_bench->add_option("--out", bench.out, "timing CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_cal) return h::cmd_calibrate(cal, std::cout);
    if (*c_build) return h::cmd_build(bld, std::cout);
    if (*c_query) return h::cmd_query(qry, std::cout);
    if (*c_audit) return h::cmd_audit(aud, std::cout);
    if (*c_attack) {
      atk.oracle = h::parse_oracle_kind(oracle_name);
      return h::cmd_attack(atk, std::cout);
    }
    if (*c_bench) {
      const auto rows = h::run_bench(bench);
      ade::write_file_atomic(bench.out, h::render_bench(rows, bench));
      std::cout << h::render_bench(rows, bench);
      return h::kExitOk;
    }
  } catch (const ade::IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return h::kExitIngestion;
  } catch (const ade::CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return h::kExitCapacity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kExitFailure;
  }
  return h::kExitFailure;
}
