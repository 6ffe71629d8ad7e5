#include "cordcov/testkit.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cordcov/parallel.hpp"
#include "cordcov/rng.hpp"
#include "cordcov/stats.hpp"

namespace cordcov {

std::string method_name(TestMethod method) {
  switch (method) {
    case TestMethod::HallinTheoretical: return "hallin-theoretical";
    case TestMethod::HallinMonteCarlo: return "hallin-montecarlo";
    case TestMethod::RdcovPermutation: return "rdcov-permutation";
    case TestMethod::DcovPermutation: return "dcov-permutation";
  }
  throw std::logic_error("unknown method");
}

TestMethod method_from_name(const std::string& name) {
  if (name == "hallin-theoretical") return TestMethod::HallinTheoretical;
  if (name == "hallin-montecarlo") return TestMethod::HallinMonteCarlo;
  if (name == "rdcov-permutation") return TestMethod::RdcovPermutation;
  if (name == "dcov-permutation") return TestMethod::DcovPermutation;
  throw std::invalid_argument("unknown test method: " + name);
}

void TestConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (permutations < 0) throw std::invalid_argument("permutation count must be >= 0");
  if (mc_reps < 1) throw std::invalid_argument("need at least one Monte Carlo replicate");
}

namespace {

nlohmann::json grid_spec_to_json(const GridSpec& g) {
  return {{"dim", g.dim},       {"n", g.n},
          {"n_radii", g.n_radii}, {"n_dirs", g.n_dirs},
          {"n_origin", g.n_origin}, {"direction_factors", g.direction_factors}};
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.dim = j.at("dim").get<int>();
  g.n = j.at("n").get<int>();
  g.n_radii = j.at("n_radii").get<int>();
  g.n_dirs = j.at("n_dirs").get<int>();
  g.n_origin = j.at("n_origin").get<int>();
  g.direction_factors = j.at("direction_factors").get<std::vector<int>>();
  return g;
}

AugmentedGrid grid_for(int n, int dim, const TestConfig& config, std::uint64_t salt) {
  DirectionMode mode = config.grid_mode.value_or(default_direction_mode(dim));
  return make_grid(n, dim, mode, mix_seed(config.seed ^ salt));
}

}  // namespace

std::string TestReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["method"] = method;
  j["n"] = n;
  j["p"] = p;
  j["q"] = q;
  j["alpha"] = alpha;
  j["statistic"] = statistic;
  j["threshold"] = threshold;
  if (p_value)
    j["p_value"] = *p_value;
  else
    j["p_value"] = nullptr;
  j["reject"] = reject;
  j["grid_x"] = grid_spec_to_json(grid_x);
  j["grid_y"] = grid_spec_to_json(grid_y);
  j["solver"] = solver;
  j["spectrum"] = {{"m_radii", spectrum_m_radii},
                   {"m_dirs", spectrum_m_dirs},
                   {"truncation", spectrum_truncation}};
  j["resamples"] = resamples;
  j["seed"] = seed;
  j["small_sample_caveat"] = small_sample_caveat;
  j["wall_time_ms"] = wall_time_ms;
  return j.dump(2);
}

TestReport TestReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TestReport r;
  r.method = j.at("method").get<std::string>();
  r.n = j.at("n").get<int>();
  r.p = j.at("p").get<int>();
  r.q = j.at("q").get<int>();
  r.alpha = j.at("alpha").get<double>();
  r.statistic = j.at("statistic").get<double>();
  r.threshold = j.at("threshold").get<double>();
  if (!j.at("p_value").is_null()) r.p_value = j.at("p_value").get<double>();
  r.reject = j.at("reject").get<bool>();
  r.grid_x = grid_spec_from_json(j.at("grid_x"));
  r.grid_y = grid_spec_from_json(j.at("grid_y"));
  r.solver = j.at("solver").get<std::string>();
  r.spectrum_m_radii = j.at("spectrum").at("m_radii").get<int>();
  r.spectrum_m_dirs = j.at("spectrum").at("m_dirs").get<int>();
  r.spectrum_truncation = j.at("spectrum").at("truncation").get<int>();
  r.resamples = j.at("resamples").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.small_sample_caveat = j.at("small_sample_caveat").get<bool>();
  r.wall_time_ms = j.at("wall_time_ms").get<double>();
  return r;
}

PermutationRun permutation_dcov_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int R,
                                     double alpha, std::uint64_t seed, int threads) {
  if (R < 1) throw std::invalid_argument("need at least one permutation");
  const int n = static_cast<int>(x.rows());
  const Eigen::MatrixXd a = pairwise_distances(x);
  const Eigen::MatrixXd b = pairwise_distances(y);

  PermutationRun run;
  run.observed = n * dcov_fast_from_distances(a, b);

  std::vector<double> permuted(static_cast<std::size_t>(R));
  parallel_for(static_cast<std::size_t>(R), threads, [&](std::size_t r) {
    std::mt19937_64 rng = substream(seed, r);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    permuted[r] = n * dcov_fast_from_distances(a, b, perm);
  });

  int count_ge = 0;
  for (double v : permuted)
    if (v >= run.observed) ++count_ge;
  run.p_value = (1.0 + count_ge) / (R + 1.0);

  std::sort(permuted.begin(), permuted.end());
  const long long k = static_cast<long long>(std::ceil((1.0 - alpha) * (R + 1.0)));
  if (k >= 1 && k <= R)
    run.threshold = permuted[static_cast<std::size_t>(k - 1)];
  else
    run.threshold = std::numeric_limits<double>::infinity();
  return run;
}

double permutation_threshold(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int R,
                             double alpha, std::uint64_t seed) {
  return permutation_dcov_test(x, y, R, alpha, seed).threshold;
}

TestReport run_test(const PairedSample& sample, const TestConfig& config,
                    CriticalValueEngine* engine) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  sample.validate(8);

  TestReport report;
  report.method = method_name(config.method);
  report.n = sample.n();
  report.p = sample.p();
  report.q = sample.q();
  report.alpha = config.alpha;
  report.solver = solver_name(config.solver);
  report.seed = config.seed;
  report.small_sample_caveat = sample.n() < 100;

  if (config.method == TestMethod::HallinTheoretical || config.method == TestMethod::HallinMonteCarlo) {
    AugmentedGrid gx = grid_for(sample.n(), sample.p(), config, 0x67726964ULL);
    AugmentedGrid gy = grid_for(sample.n(), sample.q(), config, 0x67726979ULL);
    report.grid_x = gx.spec;
    report.grid_y = gy.spec;
    report.statistic = statistic_mhat(sample, gx, gy, config.solver);

    if (config.method == TestMethod::HallinTheoretical) {
      report.spectrum_m_radii = config.spectrum.m_radii;
      report.spectrum_m_dirs = config.spectrum.m_dirs;
      report.spectrum_truncation = config.spectrum.truncation;
      CriticalValueEngine local(config.spectrum, config.cache_path);
      CriticalValueEngine& eng = engine ? *engine : local;
      report.threshold = eng.critical_value(sample.p(), sample.q(), config.alpha).value;
      report.p_value = 1.0 - eng.distribution(sample.p(), sample.q()).cdf(report.statistic);
    } else {
      MonteCarloNull null_dist = monte_carlo_null_from_grids(
          gx, gy, config.mc_reps, mix_seed(config.seed ^ 0x6d63ULL), config.threads);
      report.resamples = config.mc_reps;
      report.threshold = null_dist.quantile(1.0 - config.alpha);
      int count_ge = 0;
      for (double v : null_dist.sorted_values)
        if (v >= report.statistic) ++count_ge;
      report.p_value = (1.0 + count_ge) / (config.mc_reps + 1.0);
    }
  } else {
    const int resamples = config.permutations > 0 ? config.permutations : sample.n();
    report.resamples = resamples;
    Eigen::MatrixXd x = sample.x;
    Eigen::MatrixXd y = sample.y;
    if (config.method == TestMethod::RdcovPermutation) {
      x = marginal_ranks(x);
      y = marginal_ranks(y);
    }
    PermutationRun run = permutation_dcov_test(x, y, resamples, config.alpha,
                                               mix_seed(config.seed ^ 0x7065726dULL), config.threads);
    report.statistic = run.observed;
    report.threshold = run.threshold;
    report.p_value = run.p_value;
  }

  report.reject = report.statistic > report.threshold;
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Eigen::MatrixXd example_covariance(int p, int q, double tau, double rho) {
  if (p < 1 || q < 1) throw std::invalid_argument("dimensions must be >= 1");
  if (p < 2 && tau != 0.0) throw std::invalid_argument("tau perturbation needs p >= 2");
  const int d = p + q;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d, d);
  if (tau != 0.0) {
    sigma(0, 1) += tau;
    sigma(1, 0) += tau;
  }
  if (rho != 0.0) {
    sigma(0, p) += rho;
    sigma(p, 0) += rho;
  }
  return sigma;
}

PairedSample draw_example(int example, int p, int q, double tau, double rho, int n,
                          std::uint64_t seed) {
  if (example != 1 && example != 2) throw std::invalid_argument("example must be 1 or 2");
  Eigen::MatrixXd sigma = example_covariance(p, q, tau, rho);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "covariance not positive definite at (tau=" << tau << ", rho=" << rho << ")";
    throw std::invalid_argument(msg.str());
  }
  const Eigen::MatrixXd chol = llt.matrixL();

  const int d = p + q;
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd z(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) z(i, c) = draw_gaussian(rng);
  Eigen::MatrixXd data = z * chol.transpose();

  if (example == 2)
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c) data(i, c) = cauchy_quantile(normal_cdf(data(i, c)));

  PairedSample sample;
  sample.x = data.leftCols(p);
  sample.y = data.rightCols(q);
  return sample;
}

std::vector<SimulationRow> simulate(const SimulationConfig& config) {
  config.base.validate();
  if (config.reps < 1) throw std::invalid_argument("need at least one replicate");
  if (config.methods.empty()) throw std::invalid_argument("need at least one method");
  if (config.n < 8) throw std::invalid_argument("need n >= 8");

  const TestConfig& base = config.base;
  const double alpha = base.alpha;

  // Shared machinery across replicates: one grid pair per (n, p)/(n, q), one
  // theoretical threshold, one simulated null per grid pair.
  AugmentedGrid gx = grid_for(config.n, config.p, base, 0x67726964ULL);
  AugmentedGrid gy = grid_for(config.n, config.q, base, 0x67726979ULL);

  bool want_theoretical = false, want_mc = false, want_hallin = false;
  for (TestMethod m : config.methods) {
    want_theoretical |= m == TestMethod::HallinTheoretical;
    want_mc |= m == TestMethod::HallinMonteCarlo;
  }
  want_hallin = want_theoretical || want_mc;

  double threshold_theoretical = 0.0;
  if (want_theoretical) {
    CriticalValueEngine engine(base.spectrum, base.cache_path);
    threshold_theoretical = engine.critical_value(config.p, config.q, alpha).value;
  }
  double threshold_mc = 0.0;
  if (want_mc) {
    MonteCarloNull null_dist = monte_carlo_null_from_grids(gx, gy, base.mc_reps,
                                                           mix_seed(base.seed ^ 0x6d63ULL), base.threads);
    threshold_mc = null_dist.quantile(1.0 - alpha);
  }

  std::vector<SimulationRow> rows;
  for (std::size_t rho_idx = 0; rho_idx < config.rhos.size(); ++rho_idx) {
    const double rho = config.rhos[rho_idx];
    example_covariance(config.p, config.q, config.tau, rho);  // PD validation up front

    std::vector<std::vector<char>> rejected(config.methods.size(),
                                            std::vector<char>(static_cast<std::size_t>(config.reps), 0));
    parallel_for(static_cast<std::size_t>(config.reps), base.threads, [&](std::size_t rep) {
      const std::uint64_t rep_seed =
          mix_seed(base.seed ^ (0x1000003ULL * (rho_idx + 1))) + 977 * rep;
      PairedSample sample =
          draw_example(config.example, config.p, config.q, config.tau, rho, config.n,
                       mix_seed(rep_seed));
      double mhat = 0.0;
      if (want_hallin) mhat = statistic_mhat(sample, gx, gy, base.solver);
      for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        switch (config.methods[mi]) {
          case TestMethod::HallinTheoretical:
            rejected[mi][rep] = mhat > threshold_theoretical;
            break;
          case TestMethod::HallinMonteCarlo:
            rejected[mi][rep] = mhat > threshold_mc;
            break;
          case TestMethod::RdcovPermutation: {
            PermutationRun run = permutation_dcov_test(
                marginal_ranks(sample.x), marginal_ranks(sample.y),
                base.permutations > 0 ? base.permutations : config.n, alpha,
                mix_seed(rep_seed ^ 0x7264636fULL), 1);
            rejected[mi][rep] = run.observed > run.threshold;
            break;
          }
          case TestMethod::DcovPermutation: {
            PermutationRun run = permutation_dcov_test(
                sample.x, sample.y, base.permutations > 0 ? base.permutations : config.n, alpha,
                mix_seed(rep_seed ^ 0x64636f76ULL), 1);
            rejected[mi][rep] = run.observed > run.threshold;
            break;
          }
        }
      }
    });

    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      SimulationRow row;
      row.example = config.example;
      row.tau = config.tau;
      row.rho = rho;
      row.method = method_name(config.methods[mi]);
      row.n = config.n;
      row.p = config.p;
      row.q = config.q;
      row.reps = config.reps;
      row.rejections = static_cast<int>(
          std::count(rejected[mi].begin(), rejected[mi].end(), static_cast<char>(1)));
      row.rejection_rate = static_cast<double>(row.rejections) / config.reps;
      row.standard_error = binomial_standard_error(row.rejection_rate, config.reps);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string simulation_rows_to_csv(const std::vector<SimulationRow>& rows) {
  std::ostringstream out;
  out << "example,tau,rho,method,n,p,q,reps,rejections,rejection_rate,standard_error\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%s,%d,%d,%d,%d,%d,%.17g,%.17g\n", r.example,
                  r.tau, r.rho, r.method.c_str(), r.n, r.p, r.q, r.reps, r.rejections,
                  r.rejection_rate, r.standard_error);
    out << buf;
  }
  return out.str();
}

std::string simulation_rows_to_json(const SimulationConfig& config,
                                    const std::vector<SimulationRow>& rows) {
  nlohmann::json j;
  j["config"] = {{"example", config.example},
                 {"tau", config.tau},
                 {"rhos", config.rhos},
                 {"p", config.p},
                 {"q", config.q},
                 {"n", config.n},
                 {"reps", config.reps},
                 {"alpha", config.base.alpha},
                 {"seed", config.base.seed},
                 {"solver", solver_name(config.base.solver)},
                 {"spectrum",
                  {{"m_radii", config.base.spectrum.m_radii},
                   {"m_dirs", config.base.spectrum.m_dirs},
                   {"truncation", config.base.spectrum.truncation}}}};
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"example", r.example},
                   {"tau", r.tau},
                   {"rho", r.rho},
                   {"method", r.method},
                   {"n", r.n},
                   {"p", r.p},
                   {"q", r.q},
                   {"reps", r.reps},
                   {"rejections", r.rejections},
                   {"rejection_rate", r.rejection_rate},
                   {"standard_error", r.standard_error}});
  j["rows"] = arr;
  return j.dump(2);
}

}  // namespace cordcov
