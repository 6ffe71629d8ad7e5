#include "cordcov/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace cordcov {

void CostMatrix::validate() const {
  if (costs.rows() != costs.cols() || costs.rows() < 1)
    throw std::invalid_argument("cost matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < costs.rows(); ++i)
    for (Eigen::Index j = 0; j < costs.cols(); ++j) {
      double c = costs(i, j);
      if (!std::isfinite(c)) throw std::invalid_argument("cost matrix has a non-finite entry");
      if (c < 0.0) throw std::invalid_argument("cost matrix has a negative entry");
    }
}

void IntCostMatrix::validate() const {
  if (costs.rows() != costs.cols() || costs.rows() < 1)
    throw std::invalid_argument("cost matrix must be square and non-empty");
  if (costs.minCoeff() < 0) throw std::invalid_argument("integer costs must be non-negative");
}

CostMatrix squared_distance_costs(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& targets) {
  if (samples.rows() != targets.rows())
    throw std::invalid_argument("samples and targets must have equal counts");
  if (samples.cols() != targets.cols())
    throw std::invalid_argument("samples and targets must have equal dimension");
  const Eigen::Index n = samples.rows();
  CostMatrix cm;
  cm.costs.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    cm.costs.row(i) = (targets.rowwise() - samples.row(i)).rowwise().squaredNorm().transpose();
  return cm;
}

Assignment lsap_brute_force(const CostMatrix& cm) {
  cm.validate();
  const int n = cm.size();
  if (n > 9) throw std::invalid_argument("brute-force solver is guarded to n <= 9");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) cost += cm.costs(i, perm[static_cast<std::size_t>(i)]);
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  Assignment a;
  a.perm = std::move(best);
  a.total_cost = best_cost;
  return a;
}

Assignment lsap_hungarian(const CostMatrix& cm) {
  cm.validate();
  const int n = cm.size();
  const double inf = std::numeric_limits<double>::infinity();

  // Row-major copy; the Dijkstra step scans one row at a time.
  std::vector<double> c(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<std::size_t>(i) * n + j] = cm.costs(i, j);

  // Shortest-augmenting-path method with dual potentials, rows added in
  // index order; ties in the Dijkstra step resolve to the lowest column.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  std::vector<double> minv(static_cast<std::size_t>(n) + 1);
  std::vector<char> used(static_cast<std::size_t>(n) + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      const double u0 = u[static_cast<std::size_t>(i0)];
      const double* row = c.data() + static_cast<std::size_t>(i0 - 1) * n;
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = row[j - 1] - u0 - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment a;
  a.perm.assign(static_cast<std::size_t>(n), -1);
  a.dual_row.resize(static_cast<std::size_t>(n));
  a.dual_col.resize(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) a.perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  for (int i = 0; i < n; ++i) a.dual_row[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i) + 1];
  for (int j = 0; j < n; ++j) a.dual_col[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j) + 1];
  a.total_cost = 0.0;
  for (int i = 0; i < n; ++i) a.total_cost += cm.costs(i, a.perm[static_cast<std::size_t>(i)]);
  return a;
}

IntCostMatrix quantize_costs(const CostMatrix& cm, std::int64_t scale) {
  cm.validate();
  if (scale < 1) throw std::invalid_argument("quantization scale must be >= 1");
  const int n = cm.size();
  IntCostMatrix out;
  out.costs.resize(n, n);
  const double limit = 9.0e18;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double scaled = cm.costs(i, j) * static_cast<double>(scale);
      if (scaled > limit) throw std::invalid_argument("scaled cost exceeds 64-bit integer range");
      std::int64_t v = std::llround(scaled);
      out.costs(i, j) = v;
      out.max_cost = std::max(out.max_cost, v);
    }
  return out;
}

namespace {

// Bit-scaling assignment solver state. Works on weights (n+1)*c revealed one
// binary digit per stage; maintains 1-feasible duals (alpha + beta <= w + 1,
// tight on matched edges).
class ScalingSolver {
 public:
  ScalingSolver(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& cstar, int bits)
      : n_(static_cast<int>(cstar.rows())),
        cstar_(cstar),
        bits_(bits),
        alpha_(static_cast<std::size_t>(n_), 0),
        beta_(static_cast<std::size_t>(n_), 0),
        match_row_(static_cast<std::size_t>(n_), -1),
        match_col_(static_cast<std::size_t>(n_), -1) {}

  void run() {
    for (int stage = 1; stage <= bits_; ++stage) {
      shift_ = bits_ - stage;
      for (auto& a : alpha_) a = 2 * a - 1;  // keeps alpha + beta <= w + 1 after the digit shift
      for (auto& b : beta_) b = 2 * b;
      std::fill(match_row_.begin(), match_row_.end(), -1);
      std::fill(match_col_.begin(), match_col_.end(), -1);
      int matched = 0;
      int guard = 0;
      while (matched < n_) {
        matched += augment_admissible();
        if (matched == n_) break;
        hungarian_search();
        if (++guard > 2 * n_ + 8) throw std::logic_error("scaling solver failed to make progress");
      }
    }
    repair_duals();
    verify();
  }

  const std::vector<int>& matching() const { return match_row_; }
  const std::vector<std::int64_t>& alpha() const { return alpha_; }
  const std::vector<std::int64_t>& beta() const { return beta_; }

 private:
  std::int64_t weight(int i, int j) const { return cstar_(i, j) >> shift_; }

  bool admissible_unmatched(int i, int j) const {
    return alpha_[static_cast<std::size_t>(i)] + beta_[static_cast<std::size_t>(j)] == weight(i, j) + 1;
  }

  // Step I: depth-first search for a maximal set of vertex-disjoint
  // augmenting paths in the admissible graph; augments each as found and
  // drops alpha by 1 along the new matched rows.
  int augment_admissible() {
    std::vector<char> mark_s(static_cast<std::size_t>(n_), 0);
    std::vector<char> mark_t(static_cast<std::size_t>(n_), 0);
    std::vector<int> scan(static_cast<std::size_t>(n_), 0);
    int found = 0;
    for (int t0 = 0; t0 < n_; ++t0) {
      if (match_col_[static_cast<std::size_t>(t0)] != -1 || mark_t[static_cast<std::size_t>(t0)]) continue;
      mark_t[static_cast<std::size_t>(t0)] = 1;
      std::vector<std::pair<int, int>> path;  // (t, s) edges that would enter the matching
      int cur = t0;
      for (;;) {
        int s = -1;
        int& pos = scan[static_cast<std::size_t>(cur)];
        while (pos < n_) {
          int cand = pos++;
          if (!mark_s[static_cast<std::size_t>(cand)] && admissible_unmatched(cand, cur)) {
            s = cand;
            break;
          }
        }
        if (s >= 0) {
          mark_s[static_cast<std::size_t>(s)] = 1;
          path.emplace_back(cur, s);
          int mate = match_row_[static_cast<std::size_t>(s)];
          if (mate == -1) {
            for (auto [t, sv] : path) {
              match_row_[static_cast<std::size_t>(sv)] = t;
              match_col_[static_cast<std::size_t>(t)] = sv;
              alpha_[static_cast<std::size_t>(sv)] -= 1;
            }
            ++found;
            break;
          }
          mark_t[static_cast<std::size_t>(mate)] = 1;
          cur = mate;
        } else {
          if (path.empty()) break;
          cur = path.back().first;
          path.pop_back();
        }
      }
    }
    return found;
  }

  // Step II: grow alternating trees from every exposed column, shifting the
  // duals until the admissible graph gains an augmenting path.
  void hungarian_search() {
    const std::int64_t inf = std::numeric_limits<std::int64_t>::max();
    std::vector<char> in_ls(static_cast<std::size_t>(n_), 0);
    std::vector<char> in_lt(static_cast<std::size_t>(n_), 0);
    std::vector<std::int64_t> slack(static_cast<std::size_t>(n_), inf);

    for (int j = 0; j < n_; ++j)
      if (match_col_[static_cast<std::size_t>(j)] == -1) in_lt[static_cast<std::size_t>(j)] = 1;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (in_lt[static_cast<std::size_t>(j)])
          slack[static_cast<std::size_t>(i)] =
              std::min(slack[static_cast<std::size_t>(i)],
                       weight(i, j) + 1 - alpha_[static_cast<std::size_t>(i)] - beta_[static_cast<std::size_t>(j)]);

    for (int round = 0; round <= 2 * n_ + 2; ++round) {
      std::int64_t delta = inf;
      for (int i = 0; i < n_; ++i)
        if (!in_ls[static_cast<std::size_t>(i)]) delta = std::min(delta, slack[static_cast<std::size_t>(i)]);
      if (delta == inf) throw std::logic_error("scaling solver search exhausted");
      if (delta > 0) {
        for (int i = 0; i < n_; ++i) {
          if (in_ls[static_cast<std::size_t>(i)])
            alpha_[static_cast<std::size_t>(i)] -= delta;
          else
            slack[static_cast<std::size_t>(i)] -= delta;
        }
        for (int j = 0; j < n_; ++j)
          if (in_lt[static_cast<std::size_t>(j)]) beta_[static_cast<std::size_t>(j)] += delta;
      }
      int grow = -1;
      for (int i = 0; i < n_; ++i)
        if (!in_ls[static_cast<std::size_t>(i)] && slack[static_cast<std::size_t>(i)] == 0) {
          if (match_row_[static_cast<std::size_t>(i)] == -1) return;  // augmenting path now admissible
          grow = i;
          break;
        }
      if (grow < 0) throw std::logic_error("scaling solver lost the zero-slack edge");
      const int mate = match_row_[static_cast<std::size_t>(grow)];
      in_ls[static_cast<std::size_t>(grow)] = 1;
      in_lt[static_cast<std::size_t>(mate)] = 1;
      for (int i = 0; i < n_; ++i)
        if (!in_ls[static_cast<std::size_t>(i)])
          slack[static_cast<std::size_t>(i)] =
              std::min(slack[static_cast<std::size_t>(i)],
                       weight(i, mate) + 1 - alpha_[static_cast<std::size_t>(i)] - beta_[static_cast<std::size_t>(mate)]);
    }
    throw std::logic_error("scaling solver search failed to terminate");
  }

  // The stages end 1-feasible (alpha + beta <= c* + 1). Shift the column
  // duals by shortest-path potentials over the alternating (residual) graph
  // to obtain an exact certificate: alpha + beta <= c*, tight on matches.
  void repair_duals() {
    shift_ = 0;
    std::vector<std::int64_t> h(static_cast<std::size_t>(n_), 0);
    std::deque<int> queue;
    std::vector<char> queued(static_cast<std::size_t>(n_), 1);
    for (int j = 0; j < n_; ++j) queue.push_back(j);
    long long pops = 0;
    const long long pop_limit = 4LL * n_ * n_ * std::max(n_, 8) + 64;
    while (!queue.empty()) {
      if (++pops > pop_limit) throw std::logic_error("dual repair did not converge");
      int a = queue.front();
      queue.pop_front();
      queued[static_cast<std::size_t>(a)] = 0;
      const int i = match_col_[static_cast<std::size_t>(a)];
      const std::int64_t base = h[static_cast<std::size_t>(a)] - alpha_[static_cast<std::size_t>(i)];
      for (int j = 0; j < n_; ++j) {
        if (j == a) continue;
        std::int64_t cand = base + cstar_(i, j) - beta_[static_cast<std::size_t>(j)];
        if (cand < h[static_cast<std::size_t>(j)]) {
          h[static_cast<std::size_t>(j)] = cand;
          if (!queued[static_cast<std::size_t>(j)]) {
            queued[static_cast<std::size_t>(j)] = 1;
            queue.push_back(j);
          }
        }
      }
    }
    for (int j = 0; j < n_; ++j) beta_[static_cast<std::size_t>(j)] += h[static_cast<std::size_t>(j)];
    for (int i = 0; i < n_; ++i)
      alpha_[static_cast<std::size_t>(i)] -= h[static_cast<std::size_t>(match_row_[static_cast<std::size_t>(i)])];
  }

  void verify() const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        std::int64_t lhs = alpha_[static_cast<std::size_t>(i)] + beta_[static_cast<std::size_t>(j)];
        if (lhs > cstar_(i, j)) throw std::logic_error("scaling solver certificate violated");
        if (match_row_[static_cast<std::size_t>(i)] == j && lhs != cstar_(i, j))
          throw std::logic_error("scaling solver matched edge not tight");
      }
  }

  int n_;
  const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& cstar_;
  int bits_;
  int shift_ = 0;
  std::vector<std::int64_t> alpha_;
  std::vector<std::int64_t> beta_;
  std::vector<int> match_row_;
  std::vector<int> match_col_;
};

}  // namespace

Assignment lsap_gabow_tarjan(const IntCostMatrix& icm) {
  icm.validate();
  const int n = icm.size();
  const std::int64_t nbound = icm.max_cost;
  if (nbound > 0) {
    const std::int64_t limit = std::numeric_limits<std::int64_t>::max();
    if (static_cast<std::int64_t>(n) + 1 > limit / nbound / std::max(n, 1))
      throw std::invalid_argument("(n+1) * N * n exceeds the 64-bit integer range");
  }

  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> cstar = icm.costs * (static_cast<std::int64_t>(n) + 1);
  std::int64_t maxc = cstar.maxCoeff();
  int bits = 1;
  while ((maxc >> bits) > 0) ++bits;

  ScalingSolver solver(cstar, bits);
  solver.run();

  Assignment a;
  a.perm = solver.matching();
  a.dual_scale = static_cast<double>(n) + 1.0;
  a.dual_row.resize(static_cast<std::size_t>(n));
  a.dual_col.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a.dual_row[static_cast<std::size_t>(i)] = static_cast<double>(solver.alpha()[static_cast<std::size_t>(i)]);
  for (int j = 0; j < n; ++j) a.dual_col[static_cast<std::size_t>(j)] = static_cast<double>(solver.beta()[static_cast<std::size_t>(j)]);
  std::int64_t total = 0;
  for (int i = 0; i < n; ++i) total += icm.costs(i, a.perm[static_cast<std::size_t>(i)]);
  a.total_cost = static_cast<double>(total);
  return a;
}

bool check_optimality_certificate(const Eigen::MatrixXd& costs, const Assignment& a, double tol) {
  const int n = static_cast<int>(costs.rows());
  if (static_cast<int>(a.perm.size()) != n || a.dual_row.size() != a.perm.size() ||
      a.dual_col.size() != a.perm.size())
    return false;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double lhs = a.dual_row[static_cast<std::size_t>(i)] + a.dual_col[static_cast<std::size_t>(j)];
      double rhs = a.dual_scale * costs(i, j);
      if (lhs > rhs + tol) return false;
      if (a.perm[static_cast<std::size_t>(i)] == j && std::abs(lhs - rhs) > tol) return false;
    }
  return true;
}

std::string solver_name(const SolverOptions& opts) {
  if (opts.kind == SolverKind::Hungarian) return "hungarian";
  return "gabow-tarjan(scale=" + std::to_string(opts.quantize_scale) + ")";
}

CenterOutwardScores center_outward(const Eigen::MatrixXd& samples, const AugmentedGrid& grid,
                                   const SolverOptions& opts) {
  if (samples.rows() != grid.points.rows())
    throw std::invalid_argument("sample count must equal the grid size");
  if (samples.cols() != grid.points.cols())
    throw std::invalid_argument("sample dimension must equal the grid dimension");

  CostMatrix costs = squared_distance_costs(samples, grid.points);
  Assignment a;
  if (opts.kind == SolverKind::Hungarian) {
    a = lsap_hungarian(costs);
  } else {
    a = lsap_gabow_tarjan(quantize_costs(costs, opts.quantize_scale));
  }

  const Eigen::Index n = samples.rows();
  CenterOutwardScores scores;
  scores.perm = a.perm;
  scores.transport_cost = a.total_cost;
  scores.values.resize(n, samples.cols());
  scores.signs.resize(n, samples.cols());
  scores.ranks.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    scores.values.row(i) = grid.points.row(a.perm[static_cast<std::size_t>(i)]);
    double norm = scores.values.row(i).norm();
    scores.ranks(i) = (grid.spec.n_radii + 1) * norm;
    if (norm > 0.0)
      scores.signs.row(i) = scores.values.row(i) / norm;
    else
      scores.signs.row(i).setZero();
  }
  return scores;
}

std::string assignment_to_json(const Assignment& a) {
  nlohmann::json j;
  j["perm"] = a.perm;
  j["total_cost"] = a.total_cost;
  j["dual_row"] = a.dual_row;
  j["dual_col"] = a.dual_col;
  j["dual_scale"] = a.dual_scale;
  return j.dump();
}

}  // namespace cordcov
