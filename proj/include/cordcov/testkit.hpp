#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cordcov/assignment.hpp"
#include "cordcov/dcov.hpp"
#include "cordcov/grid.hpp"
#include "cordcov/nulldist.hpp"

namespace cordcov {

enum class TestMethod { HallinTheoretical, HallinMonteCarlo, RdcovPermutation, DcovPermutation };

std::string method_name(TestMethod method);
TestMethod method_from_name(const std::string& name);

struct TestConfig {
  TestMethod method = TestMethod::HallinTheoretical;
  double alpha = 0.05;
  int permutations = 0;  // permutation methods; 0 means R = n
  int mc_reps = 10000;   // simulation-based threshold replicates
  std::uint64_t seed = 0;
  SolverOptions solver;
  SpectrumOptions spectrum;
  std::optional<DirectionMode> grid_mode;  // nullopt: per-dimension default
  std::string cache_path;                  // critical-value cache (optional)
  int threads = 1;

  void validate() const;
};

struct TestReport {
  std::string method;
  int n = 0, p = 0, q = 0;
  double alpha = 0.0;
  double statistic = 0.0;
  double threshold = 0.0;
  std::optional<double> p_value;
  bool reject = false;  // strict: statistic > threshold
  GridSpec grid_x, grid_y;
  std::string solver;
  int spectrum_m_radii = 0, spectrum_m_dirs = 0, spectrum_truncation = 0;
  int resamples = 0;  // permutations or Monte Carlo replicates, when used
  std::uint64_t seed = 0;
  // The asymptotic p-value is reported even at moderate n; flagged below 100.
  bool small_sample_caveat = false;
  double wall_time_ms = 0.0;

  std::string to_json() const;
  static TestReport from_json(const std::string& text);
};

// Runs one of the four tests on the paired sample. When `engine` is given it
// supplies (and memoizes) the null-spectrum machinery across calls.
TestReport run_test(const PairedSample& sample, const TestConfig& config,
                    CriticalValueEngine* engine = nullptr);

struct PermutationRun {
  double observed = 0.0;
  double threshold = 0.0;  // ceil((1-alpha)(R+1))-th order statistic; +inf if out of range
  double p_value = 0.0;    // (1 + #{permuted >= observed}) / (R + 1)
};

// Permutation distance-covariance test: permutes the rows of y R times with
// a seeded RNG and recomputes n * dCov^2_n each time.
PermutationRun permutation_dcov_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int R,
                                     double alpha, std::uint64_t seed, int threads = 1);

double permutation_threshold(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int R,
                             double alpha, std::uint64_t seed);

// Simulation designs: Gaussian with covariance I + tau*L(1,2) + rho*L(1,p+1)
// (example 1), and the same pushed coordinatewise through the Cauchy quantile
// transform (example 2).
Eigen::MatrixXd example_covariance(int p, int q, double tau, double rho);
PairedSample draw_example(int example, int p, int q, double tau, double rho, int n,
                          std::uint64_t seed);

struct SimulationConfig {
  int example = 1;
  double tau = 0.0;
  std::vector<double> rhos = {0.0};
  int p = 2, q = 2, n = 216, reps = 1000;
  std::vector<TestMethod> methods = {TestMethod::HallinTheoretical};
  TestConfig base;  // alpha, seed, solver, spectrum, cache, threads
};

struct SimulationRow {
  int example = 1;
  double tau = 0.0, rho = 0.0;
  std::string method;
  int n = 0, p = 0, q = 0, reps = 0, rejections = 0;
  double rejection_rate = 0.0;
  double standard_error = 0.0;
};

std::vector<SimulationRow> simulate(const SimulationConfig& config);

std::string simulation_rows_to_csv(const std::vector<SimulationRow>& rows);
std::string simulation_rows_to_json(const SimulationConfig& config,
                                    const std::vector<SimulationRow>& rows);

}  // namespace cordcov
