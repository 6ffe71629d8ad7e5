#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cordcov/csv.hpp"
#include "cordcov/grid.hpp"
#include "cordcov/nulldist.hpp"
#include "cordcov/reference_values.hpp"
#include "cordcov/rng.hpp"
#include "cordcov/testkit.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitCompute = 3;

struct CommonFlags {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string cache_path;
  int m_radii = 0;  // 0: per-dimension default
  int m_dirs = 0;
  int truncation = 100000;
  std::string solver = "hungarian";
  std::int64_t quantize_scale = 1 << 20;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "RNG seed (all randomized steps are reproducible under it)");
  cmd->add_option("--threads", flags.threads, "worker threads for replicate loops")->check(CLI::PositiveNumber);
  cmd->add_option("--cache", flags.cache_path, "critical-value cache file (line-delimited JSON)");
  cmd->add_option("--spectrum-radii", flags.m_radii, "spectrum grid radii count (0 = per-dimension default)");
  cmd->add_option("--spectrum-dirs", flags.m_dirs, "spectrum grid direction count (0 = per-dimension default)");
  cmd->add_option("--spectrum-truncation", flags.truncation, "retained product-spectrum length")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--solver", flags.solver, "assignment solver: hungarian | gabow-tarjan")
      ->check(CLI::IsMember({"hungarian", "gabow-tarjan"}));
  cmd->add_option("--quantize-scale", flags.quantize_scale,
                  "cost quantization scale for the gabow-tarjan solver");
}

cordcov::TestConfig base_config(const CommonFlags& flags) {
  cordcov::TestConfig config;
  config.seed = flags.seed;
  config.threads = flags.threads;
  config.cache_path = flags.cache_path;
  if (flags.m_radii > 0) config.spectrum.m_radii = flags.m_radii;
  if (flags.m_dirs > 0) config.spectrum.m_dirs = flags.m_dirs;
  config.spectrum.truncation = flags.truncation;
  config.solver.kind = flags.solver == "gabow-tarjan" ? cordcov::SolverKind::GabowTarjan
                                                      : cordcov::SolverKind::Hungarian;
  config.solver.quantize_scale = flags.quantize_scale;
  return config;
}

void print_pretty(const cordcov::TestReport& r) {
  std::printf("method          : %s\n", r.method.c_str());
  std::printf("n, p, q         : %d, %d, %d\n", r.n, r.p, r.q);
  std::printf("statistic       : %.6f\n", r.statistic);
  std::printf("threshold       : %.6f  (alpha = %g)\n", r.threshold, r.alpha);
  if (r.p_value) std::printf("p-value         : %.6g%s\n", *r.p_value,
                             r.small_sample_caveat && r.method == "hallin-theoretical"
                                 ? "  (asymptotic; n < 100)"
                                 : "");
  std::printf("decision        : %s\n", r.reject ? "reject independence" : "do not reject");
  std::printf("solver          : %s\n", r.solver.c_str());
  std::printf("grid X          : n_radii=%d n_dirs=%d n_origin=%d\n", r.grid_x.n_radii,
              r.grid_x.n_dirs, r.grid_x.n_origin);
  std::printf("grid Y          : n_radii=%d n_dirs=%d n_origin=%d\n", r.grid_y.n_radii,
              r.grid_y.n_dirs, r.grid_y.n_origin);
  if (r.resamples > 0) std::printf("resamples       : %d\n", r.resamples);
  std::printf("wall time       : %.1f ms\n", r.wall_time_ms);
}

int cmd_test(const cordcov::InputSpec& input, const CommonFlags& flags,
             const std::string& method_arg, double alpha, int permutations, int mc_reps,
             bool as_json, const std::string& out_path) {
  cordcov::PairedSample sample = cordcov::read_paired_sample(input);
  sample.validate(8);

  std::vector<cordcov::TestMethod> methods;
  if (method_arg == "all")
    methods = {cordcov::TestMethod::HallinTheoretical, cordcov::TestMethod::HallinMonteCarlo,
               cordcov::TestMethod::RdcovPermutation, cordcov::TestMethod::DcovPermutation};
  else
    methods = {cordcov::method_from_name(method_arg)};

  cordcov::TestConfig config = base_config(flags);
  config.alpha = alpha;
  config.permutations = permutations;
  config.mc_reps = mc_reps;

  cordcov::CriticalValueEngine engine(config.spectrum, config.cache_path);
  nlohmann::json arr = nlohmann::json::array();
  bool first = true;
  for (cordcov::TestMethod m : methods) {
    config.method = m;
    cordcov::TestReport report = cordcov::run_test(sample, config, &engine);
    arr.push_back(nlohmann::json::parse(report.to_json()));
    if (as_json) continue;
    if (!first) std::printf("\n");
    print_pretty(report);
    first = false;
  }
  std::string json_text = methods.size() == 1 ? arr[0].dump(2) : arr.dump(2);
  if (as_json) std::printf("%s\n", json_text.c_str());
  if (!out_path.empty()) cordcov::write_text_file(out_path, json_text + "\n");
  return kExitOk;
}

int cmd_critical_values(const CommonFlags& flags, std::vector<int> ps, std::vector<int> qs,
                        std::vector<double> alphas, bool verify_reference, bool as_json,
                        const std::string& csv_path) {
  if (ps.empty()) ps = {1, 2, 3};
  if (qs.empty()) qs = ps;
  if (alphas.empty()) alphas = {0.10, 0.05, 0.01};

  cordcov::TestConfig config = base_config(flags);
  cordcov::CriticalValueEngine engine(config.spectrum, config.cache_path);

  struct Row {
    int p, q;
    double alpha, value;
    std::optional<double> reference;
    bool from_cache;
  };
  std::vector<Row> rows;
  double max_abs_dev = 0.0;
  int compared = 0;
  for (double alpha : alphas)
    for (int p : ps)
      for (int q : qs) {
        auto res = engine.critical_value(p, q, alpha);
        Row row{p, q, alpha, res.value, std::nullopt, res.from_cache};
        if (verify_reference) {
          row.reference = cordcov::reference_critical_value(p, q, alpha);
          if (row.reference) {
            max_abs_dev = std::max(max_abs_dev, std::abs(res.value - *row.reference));
            ++compared;
          }
        }
        rows.push_back(row);
      }

  std::string csv = "p,q,alpha,value,reference,from_cache\n";
  char buf[160];
  for (const auto& r : rows) {
    if (r.reference)
      std::snprintf(buf, sizeof(buf), "%d,%d,%g,%.6f,%.3f,%d\n", r.p, r.q, r.alpha, r.value,
                    *r.reference, r.from_cache ? 1 : 0);
    else
      std::snprintf(buf, sizeof(buf), "%d,%d,%g,%.6f,,%d\n", r.p, r.q, r.alpha, r.value,
                    r.from_cache ? 1 : 0);
    csv += buf;
  }
  if (!csv_path.empty()) cordcov::write_text_file(csv_path, csv);

  if (as_json) {
    nlohmann::json j;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json e = {{"p", r.p}, {"q", r.q},       {"alpha", r.alpha},
                          {"value", r.value}, {"from_cache", r.from_cache}};
      if (r.reference) e["reference"] = *r.reference;
      arr.push_back(e);
    }
    j["values"] = arr;
    j["spectra_computed"] = engine.spectra_computed();
    if (verify_reference && compared > 0) j["max_abs_deviation"] = max_abs_dev;
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("%s", csv.c_str());
    std::printf("# spectra computed: %d\n", engine.spectra_computed());
    if (verify_reference && compared > 0)
      std::printf("# max |value - reference| over %d entries: %.4f\n", compared, max_abs_dev);
  }
  return kExitOk;
}

int cmd_simulate(const CommonFlags& flags, const std::string& example_arg, double tau_flag,
                 bool tau_set, std::vector<double> rhos, int p, int q, int n, int reps,
                 std::vector<std::string> method_args, double alpha, int permutations, int mc_reps,
                 const std::string& out_prefix) {
  cordcov::SimulationConfig config;
  // example ids: plain 1/2, or 1a/1b/1c (2a/...) with tau = 0 / 0.5 / 0.9
  std::string ex = example_arg;
  double tau = tau_set ? tau_flag : 0.0;
  if (!ex.empty() && (ex.back() == 'a' || ex.back() == 'b' || ex.back() == 'c')) {
    if (!tau_set) tau = ex.back() == 'a' ? 0.0 : (ex.back() == 'b' ? 0.5 : 0.9);
    ex.pop_back();
  }
  config.example = std::stoi(ex);
  config.tau = tau;
  if (!rhos.empty()) config.rhos = rhos;
  config.p = p;
  config.q = q;
  config.n = n;
  config.reps = reps;

  config.methods.clear();
  for (const auto& name : method_args) {
    if (name == "all") {
      config.methods = {cordcov::TestMethod::HallinTheoretical, cordcov::TestMethod::HallinMonteCarlo,
                        cordcov::TestMethod::RdcovPermutation, cordcov::TestMethod::DcovPermutation};
      break;
    }
    config.methods.push_back(cordcov::method_from_name(name));
  }
  if (config.methods.empty()) config.methods = {cordcov::TestMethod::HallinTheoretical};

  config.base = base_config(flags);
  config.base.alpha = alpha;
  config.base.permutations = permutations;
  config.base.mc_reps = mc_reps;

  std::vector<cordcov::SimulationRow> rows = cordcov::simulate(config);
  std::string csv = cordcov::simulation_rows_to_csv(rows);
  std::printf("%s", csv.c_str());
  if (!out_prefix.empty()) {
    cordcov::write_text_file(out_prefix + ".csv", csv);
    cordcov::write_text_file(out_prefix + ".json", cordcov::simulation_rows_to_json(config, rows));
  }
  return kExitOk;
}

int cmd_bench(const CommonFlags& flags, const std::string& solver_arg, std::vector<int> sizes,
              int dim) {
  if (sizes.empty()) sizes = {250, 500, 1000};
  const bool run_hungarian = solver_arg == "hungarian" || solver_arg == "both";
  const bool run_scaling = solver_arg == "gabow-tarjan" || solver_arg == "both";

  struct Row {
    int n;
    double hungarian_ms = -1.0, scaling_ms = -1.0, cost_h = 0.0, cost_s = 0.0;
  };
  std::vector<Row> rows;
  std::mt19937_64 rng(cordcov::mix_seed(flags.seed ^ 0xbe9cULL));
  for (int n : sizes) {
    Row row;
    row.n = n;
    cordcov::AugmentedGrid grid = cordcov::make_grid(n, dim, flags.seed + 1);
    Eigen::MatrixXd samples(n, dim);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < dim; ++c) samples(i, c) = cordcov::draw_gaussian(rng);
    cordcov::CostMatrix costs = cordcov::squared_distance_costs(samples, grid.points);
    if (run_hungarian) {
      auto t0 = std::chrono::steady_clock::now();
      cordcov::Assignment a = cordcov::lsap_hungarian(costs);
      row.hungarian_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      row.cost_h = a.total_cost;
    }
    if (run_scaling) {
      cordcov::IntCostMatrix icm = cordcov::quantize_costs(costs, flags.quantize_scale);
      auto t0 = std::chrono::steady_clock::now();
      cordcov::Assignment a = cordcov::lsap_gabow_tarjan(icm);
      row.scaling_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      row.cost_s = a.total_cost / static_cast<double>(flags.quantize_scale);
    }
    rows.push_back(row);
  }

  std::printf("n,hungarian_ms,gabow_tarjan_ms\n");
  for (const auto& r : rows) {
    std::printf("%d,", r.n);
    if (r.hungarian_ms >= 0) std::printf("%.2f", r.hungarian_ms);
    std::printf(",");
    if (r.scaling_ms >= 0) std::printf("%.2f", r.scaling_ms);
    std::printf("\n");
  }
  if (run_hungarian && rows.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : rows) {
      double x = std::log(static_cast<double>(r.n)), y = std::log(r.hungarian_ms);
      sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    double m = static_cast<double>(rows.size());
    double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    std::printf("# hungarian log-log slope: %.2f\n", slope);
  }
  if (run_hungarian && run_scaling) {
    const Row& last = rows.back();
    std::printf("# at n=%d: gabow-tarjan %s hungarian (%.2f ms vs %.2f ms)\n", last.n,
                last.scaling_ms < last.hungarian_ms ? "beats" : "does not beat", last.scaling_ms,
                last.hungarian_ms);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution-free independence testing via center-outward ranks and distance covariance"};
  app.require_subcommand(1);

  CommonFlags flags;

  // test
  auto* test = app.add_subcommand("test", "run an independence test on CSV data");
  cordcov::InputSpec input;
  std::string method = "hallin-theoretical";
  double alpha = 0.05;
  int permutations = 0, mc_reps = 10000;
  bool as_json = false;
  std::string out_path;
  test->add_option("--file,-f", input.path_x, "single CSV holding X columns then Y columns");
  test->add_option("--px", input.split_col, "number of X columns in single-file mode");
  std::string x_path, y_path;
  test->add_option("--x", x_path, "CSV with the X sample");
  test->add_option("--y", y_path, "CSV with the Y sample");
  test->add_flag("--header", input.has_header, "skip the first line of each input file");
  std::string delim = ",";
  test->add_option("--delimiter", delim, "field delimiter (single character)");
  test->add_option("--method", method,
                   "hallin-theoretical | hallin-montecarlo | rdcov-permutation | dcov-permutation | all");
  test->add_option("--alpha", alpha, "significance level")->check(CLI::Range(1e-9, 1.0 - 1e-9));
  test->add_option("--permutations", permutations, "permutation count (0 = n)");
  test->add_option("--mc-reps", mc_reps, "Monte Carlo null replicates");
  test->add_flag("--json", as_json, "emit the report as JSON instead of text");
  test->add_option("--out", out_path, "also write the JSON report to this path");
  add_common(test, flags);

  // critical-values
  auto* cv = app.add_subcommand("critical-values", "tabulate critical values Q_{1-alpha}");
  std::vector<int> ps, qs;
  std::vector<double> alphas;
  bool verify_reference = false, cv_json = false;
  std::string cv_csv;
  cv->add_option("--p", ps, "X dimensions");
  cv->add_option("--q", qs, "Y dimensions (defaults to --p)");
  cv->add_option("--alpha", alphas, "levels (default 0.1 0.05 0.01)");
  cv->add_flag("--verify-reference", verify_reference,
               "compare against the embedded reference table and report the max deviation");
  cv->add_flag("--json", cv_json, "emit JSON");
  cv->add_option("--csv", cv_csv, "write the table to this CSV file");
  add_common(cv, flags);

  // simulate
  auto* sim = app.add_subcommand("simulate", "size/power simulation studies");
  std::string example = "1a";
  double tau = 0.0;
  std::vector<double> rhos;
  int p = 2, q = 2, n = 216, reps = 1000;
  std::vector<std::string> sim_methods;
  double sim_alpha = 0.05;
  int sim_perm = 0, sim_mc = 10000;
  std::string out_prefix;
  sim->add_option("--example", example, "1|2 or 1a/1b/1c/2a/2b/2c (letter sets tau=0/0.5/0.9)");
  auto* tau_opt = sim->add_option("--tau", tau, "within-group covariance perturbation");
  sim->add_option("--rho", rhos, "cross-group signal levels (default 0)");
  sim->add_option("--p", p, "X dimension");
  sim->add_option("--q", q, "Y dimension");
  sim->add_option("--n", n, "sample size");
  sim->add_option("--reps", reps, "replicates per cell");
  sim->add_option("--methods", sim_methods, "methods to run (or 'all')");
  sim->add_option("--alpha", sim_alpha, "significance level");
  sim->add_option("--permutations", sim_perm, "permutation count (0 = n)");
  sim->add_option("--mc-reps", sim_mc, "Monte Carlo null replicates");
  sim->add_option("--out", out_prefix, "write <prefix>.csv and <prefix>.json");
  add_common(sim, flags);

  // bench
  auto* bench = app.add_subcommand("bench", "time the assignment solvers");
  std::string bench_solver = "both";
  std::vector<int> bench_sizes;
  int bench_dim = 2;
  bench->add_option("--solvers", bench_solver, "hungarian | gabow-tarjan | both")
      ->check(CLI::IsMember({"hungarian", "gabow-tarjan", "both"}));
  bench->add_option("--n", bench_sizes, "problem sizes");
  bench->add_option("--d", bench_dim, "point dimension");
  add_common(bench, flags);

  try {
    app.parse(argc, argv);
    if (test->parsed()) {
      if (!x_path.empty() || !y_path.empty()) {
        if (x_path.empty() || y_path.empty())
          throw cordcov::InputError("two-file mode needs both --x and --y");
        if (!input.path_x.empty())
          throw cordcov::InputError("use either --file or --x/--y, not both");
        input.path_x = x_path;
        input.path_y = y_path;
      } else if (input.path_x.empty()) {
        throw cordcov::InputError("no input: pass --file with --px, or --x and --y");
      } else if (input.split_col < 1) {
        throw cordcov::InputError("single-file mode needs --px >= 1");
      }
      if (delim.size() != 1) throw cordcov::InputError("delimiter must be a single character");
      input.delimiter = delim[0];
      return cmd_test(input, flags, method, alpha, permutations, mc_reps, as_json, out_path);
    }
    if (cv->parsed())
      return cmd_critical_values(flags, ps, qs, alphas, verify_reference, cv_json, cv_csv);
    if (sim->parsed())
      return cmd_simulate(flags, example, tau, tau_opt->count() > 0, rhos, p, q, n, reps,
                          sim_methods, sim_alpha, sim_perm, sim_mc, out_prefix);
    if (bench->parsed()) return cmd_bench(flags, bench_solver, bench_sizes, bench_dim);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  } catch (const cordcov::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCompute;
  }
}
