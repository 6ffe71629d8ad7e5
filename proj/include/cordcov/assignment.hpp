#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "cordcov/grid.hpp"

namespace cordcov {

// Squared-distance assignment costs, costs(i, j) = |sample_i - target_j|^2.
struct CostMatrix {
  Eigen::MatrixXd costs;

  int size() const { return static_cast<int>(costs.rows()); }
  // Throws on non-square, non-finite, or negative entries.
  void validate() const;
};

CostMatrix squared_distance_costs(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& targets);

struct Assignment {
  // row i is assigned to column perm[i]; a bijection.
  std::vector<int> perm;
  double total_cost = 0.0;
  // Dual certificate: dual_row[i] + dual_col[j] <= dual_scale * costs(i, j)
  // with equality on assigned pairs. Empty for the brute-force solver.
  std::vector<double> dual_row;
  std::vector<double> dual_col;
  double dual_scale = 1.0;
};

// Exhaustive minimum over all permutations; ties resolved to the
// lexicographically smallest permutation. Guarded to n <= 9.
Assignment lsap_brute_force(const CostMatrix& costs);

// Exact O(n^3) shortest-augmenting-path solver with dual potentials.
Assignment lsap_hungarian(const CostMatrix& costs);

struct IntCostMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> costs;
  std::int64_t max_cost = 0;

  int size() const { return static_cast<int>(costs.rows()); }
  void validate() const;
};

// Rounds costs * scale to integers (half away from zero) and records the
// resulting bound N = max entry. The optimum of the quantized problem is
// within n/scale of the real-valued optimum in objective value.
IntCostMatrix quantize_costs(const CostMatrix& costs, std::int64_t scale);

// Exact bit-scaling solver for integer costs: stages over the binary digits
// of (n+1)*c, each stage restoring a 1-optimal matching through phases of
// path augmentation and Hungarian search. On return the duals certify
// optimality against (n+1)*costs exactly (dual_scale = n+1); the certificate
// is re-verified internally in integer arithmetic.
Assignment lsap_gabow_tarjan(const IntCostMatrix& costs);

// Complementary slackness at tolerance `tol` (absolute, on the scaled costs).
bool check_optimality_certificate(const Eigen::MatrixXd& costs, const Assignment& a, double tol);

enum class SolverKind { Hungarian, GabowTarjan };

struct SolverOptions {
  SolverKind kind = SolverKind::Hungarian;
  // Quantization scale used when kind == GabowTarjan.
  std::int64_t quantize_scale = 1 << 20;
};

std::string solver_name(const SolverOptions& opts);

// Empirical center-outward values, ranks, and signs for the samples:
// values are the grid points under the cost-minimizing bijection, ranks are
// (n_radii + 1) * |value|, signs are unit vectors (zero at the origin).
struct CenterOutwardScores {
  Eigen::MatrixXd values;
  Eigen::VectorXd ranks;
  Eigen::MatrixXd signs;
  std::vector<int> perm;
  double transport_cost = 0.0;
};

CenterOutwardScores center_outward(const Eigen::MatrixXd& samples, const AugmentedGrid& grid,
                                   const SolverOptions& opts = {});

// Debug dump of the permutation and duals as a JSON object string.
std::string assignment_to_json(const Assignment& a);

}  // namespace cordcov
