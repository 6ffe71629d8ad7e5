#pragma once

#include <Eigen/Core>
#include <vector>

#include "cordcov/assignment.hpp"
#include "cordcov/grid.hpp"

namespace cordcov {

// Two paired samples with a common row count; rows are observations.
struct PairedSample {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;

  int n() const { return static_cast<int>(x.rows()); }
  int p() const { return static_cast<int>(x.cols()); }
  int q() const { return static_cast<int>(y.cols()); }
  void validate(int min_n = 4) const;
};

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& m);

// Unbiased sample distance covariance (order-4 U-statistic).
// Reference implementation averaging the symmetrized kernel over all
// 4-subsets; O(n^4), guarded to n <= 64, kept as a cross-check oracle.
double dcov_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

// Same estimator via the three-term O(n^2) rearrangement.
double dcov_fast(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

// O(n^2) form evaluated on precomputed distance matrices.
double dcov_fast_from_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// As above with the rows/columns of `b` relabeled by `perm`
// (b_effective(i, j) = b(perm[i], perm[j])).
double dcov_fast_from_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const std::vector<int>& perm);

// Columnwise ranks in {1, ..., n}; ties share their average rank.
Eigen::MatrixXd marginal_ranks(const Eigen::MatrixXd& m);

// The test statistic: n times the sample distance covariance of the two
// margins' center-outward values.
double statistic_mhat(const PairedSample& sample, const AugmentedGrid& grid_x,
                      const AugmentedGrid& grid_y, const SolverOptions& solver = {});

}  // namespace cordcov
