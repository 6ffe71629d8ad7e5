#include "cordcov/dcov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cordcov {

void PairedSample::validate(int min_n) const {
  if (x.rows() != y.rows()) throw std::invalid_argument("paired sample row counts differ");
  if (x.rows() < min_n)
    throw std::invalid_argument("need at least " + std::to_string(min_n) + " observations");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("sample has non-finite entries");
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = (m.row(i) - m.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

namespace {

// s(t1,t2,t3,t4) = |t1-t2| + |t3-t4| - |t1-t3| - |t2-t4| on a distance matrix.
inline double s_term(const Eigen::MatrixXd& d, int a, int b, int c, int e) {
  return d(a, b) + d(c, e) - d(a, c) - d(b, e);
}

}  // namespace

double dcov_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  PairedSample sample{x, y};
  sample.validate();
  const int n = sample.n();
  if (n > 64) throw std::invalid_argument("naive estimator is guarded to n <= 64");

  const Eigen::MatrixXd dx = pairwise_distances(x);
  const Eigen::MatrixXd dy = pairwise_distances(y);

  double total = 0.0;
  long long quadruples = 0;
  int idx[4];
  for (idx[0] = 0; idx[0] < n; ++idx[0])
    for (idx[1] = idx[0] + 1; idx[1] < n; ++idx[1])
      for (idx[2] = idx[1] + 1; idx[2] < n; ++idx[2])
        for (idx[3] = idx[2] + 1; idx[3] < n; ++idx[3]) {
          int perm[4] = {0, 1, 2, 3};
          double k = 0.0;
          do {
            int a = idx[perm[0]], b = idx[perm[1]], c = idx[perm[2]], e = idx[perm[3]];
            k += s_term(dx, a, b, c, e) * s_term(dy, a, b, c, e);
          } while (std::next_permutation(perm, perm + 4));
          total += k / (4.0 * 24.0);
          ++quadruples;
        }
  return total / static_cast<double>(quadruples);
}

double dcov_fast(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  PairedSample sample{x, y};
  sample.validate();
  const Eigen::Index n = x.rows();

  double s1 = 0.0, total_a = 0.0, total_b = 0.0;
  Eigen::VectorXd row_a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd row_b = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double a = (x.row(i) - x.row(j)).norm();
      double b = (y.row(i) - y.row(j)).norm();
      s1 += 2.0 * a * b;
      row_a(i) += a;
      row_a(j) += a;
      row_b(i) += b;
      row_b(j) += b;
      total_a += 2.0 * a;
      total_b += 2.0 * b;
    }
  double s2 = row_a.dot(row_b);
  double dn = static_cast<double>(n);
  return s1 / (dn * (dn - 3.0)) - 2.0 * s2 / (dn * (dn - 2.0) * (dn - 3.0)) +
         total_a * total_b / (dn * (dn - 1.0) * (dn - 2.0) * (dn - 3.0));
}

double dcov_fast_from_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index n = a.rows();
  if (n < 4 || b.rows() != n || a.cols() != n || b.cols() != n)
    throw std::invalid_argument("need square n x n distance matrices, n >= 4");
  double s1 = 0.0;
  Eigen::VectorXd row_a = a.rowwise().sum();
  Eigen::VectorXd row_b = b.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) s1 += a.row(i).dot(b.row(i));
  double s2 = row_a.dot(row_b);
  double s3 = row_a.sum() * row_b.sum();
  double dn = static_cast<double>(n);
  return s1 / (dn * (dn - 3.0)) - 2.0 * s2 / (dn * (dn - 2.0) * (dn - 3.0)) +
         s3 / (dn * (dn - 1.0) * (dn - 2.0) * (dn - 3.0));
}

double dcov_fast_from_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const std::vector<int>& perm) {
  const Eigen::Index n = a.rows();
  if (static_cast<Eigen::Index>(perm.size()) != n)
    throw std::invalid_argument("permutation length must equal the matrix size");
  double s1 = 0.0, s2 = 0.0;
  Eigen::VectorXd row_b = b.rowwise().sum();
  Eigen::VectorXd row_a = a.rowwise().sum();
  // both matrices are symmetric; scan columns for contiguous access
  for (Eigen::Index i = 0; i < n; ++i) {
    const int pi = perm[static_cast<std::size_t>(i)];
    const double* col_a = a.col(i).data();
    const double* col_b = b.col(pi).data();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += col_a[j] * col_b[perm[static_cast<std::size_t>(j)]];
    s1 += acc;
    s2 += row_a(i) * row_b(pi);
  }
  double s3 = row_a.sum() * row_b.sum();
  double dn = static_cast<double>(n);
  return s1 / (dn * (dn - 3.0)) - 2.0 * s2 / (dn * (dn - 2.0) * (dn - 3.0)) +
         s3 / (dn * (dn - 1.0) * (dn - 2.0) * (dn - 3.0));
}

Eigen::MatrixXd marginal_ranks(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd ranks(n, m.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return m(i, c) < m(j, c); });
    Eigen::Index i = 0;
    while (i < n) {
      Eigen::Index j = i;
      while (j + 1 < n && m(order[static_cast<std::size_t>(j + 1)], c) == m(order[static_cast<std::size_t>(i)], c)) ++j;
      double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // average of ranks i+1..j+1
      for (Eigen::Index k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)], c) = avg;
      i = j + 1;
    }
  }
  return ranks;
}

double statistic_mhat(const PairedSample& sample, const AugmentedGrid& grid_x,
                      const AugmentedGrid& grid_y, const SolverOptions& solver) {
  sample.validate();
  CenterOutwardScores sx = center_outward(sample.x, grid_x, solver);
  CenterOutwardScores sy = center_outward(sample.y, grid_y, solver);
  return sample.n() * dcov_fast(sx.values, sy.values);
}

}  // namespace cordcov
