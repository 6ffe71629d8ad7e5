#include "cordcov/nulldist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <lapacke.h>

#include <json.hpp>

#include "cordcov/dcov.hpp"
#include "cordcov/parallel.hpp"
#include "cordcov/rng.hpp"

namespace cordcov {

const char* const kCriticalValueGeneratorVersion = "1";

double Spectrum::magnitude_sum() const {
  double s = 0.0;
  for (double v : eigenvalues) s += std::abs(v);
  return s;
}

std::vector<double> centered_distance_eigenvalues(const Eigen::MatrixXd& points) {
  const int m = static_cast<int>(points.rows());
  if (m < 2) throw std::invalid_argument("need at least two grid points");
  Eigen::MatrixXd d = pairwise_distances(points);
  Eigen::VectorXd row_mean = d.rowwise().mean();
  const double grand_mean = row_mean.mean();
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i)
      d(i, j) = (d(i, j) - row_mean(i) - row_mean(j) + grand_mean) / m;

  std::vector<double> w(static_cast<std::size_t>(m));
  int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', m, d.data(), m, w.data());
  if (info != 0)
    throw std::runtime_error("symmetric eigensolver failed (dsyevd info=" + std::to_string(info) + ")");

  // Ascending order; the centered kernel is negative semidefinite with a
  // single structural zero, so the largest eigenvalue is the one to drop.
  w.pop_back();
  for (double v : w)
    if (!(v < 0.0))
      throw std::runtime_error("centered distance kernel produced a non-negative eigenvalue");
  return w;  // ascending values = descending magnitude
}

Spectrum spectrum_closed_form_1d(int count) {
  if (count < 1) throw std::invalid_argument("need a positive eigenvalue count");
  Spectrum s;
  s.dim = 1;
  s.eigenvalues.resize(static_cast<std::size_t>(count));
  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (int j = 1; j <= count; ++j)
    s.eigenvalues[static_cast<std::size_t>(j - 1)] = -4.0 / (pi2 * j * j);
  return s;
}

// Defaults tuned against converged quantiles: the discretization error is
// driven by the direction count once m_radii is a few dozen, so the budget
// shifts toward directions as the dimension grows. dim 3 gets the 15x15
// deterministic direction set, which converges fastest of the tested grids.
std::pair<int, int> resolved_spectrum_grid(int dim, const SpectrumOptions& opts) {
  int radii = opts.m_radii;
  int dirs = opts.m_dirs;
  if (radii == 0) radii = dim <= 2 ? 60 : (dim == 3 ? 40 : 30);
  if (dirs == 0) dirs = dim <= 2 ? 60 : (dim == 3 ? 225 : 330);
  return {radii, dirs};
}

namespace {

bool is_power(int value, int exponent, int* base_out) {
  int base = static_cast<int>(std::llround(std::pow(value, 1.0 / exponent)));
  for (int b = std::max(1, base - 1); b <= base + 1; ++b) {
    long long prod = 1;
    for (int k = 0; k < exponent; ++k) prod *= b;
    if (prod == value) {
      *base_out = b;
      return true;
    }
  }
  return false;
}

}  // namespace

Spectrum spectrum(int dim, const SpectrumOptions& opts) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  auto [m_radii, m_dirs] = resolved_spectrum_grid(dim, opts);
  if (m_radii < 2 || m_dirs < 2)
    throw std::invalid_argument("need m_radii >= 2 and m_dirs >= 2");

  if (dim == 1) {
    Spectrum s = spectrum_closed_form_1d(m_radii * m_dirs - 1);
    s.m_radii = m_radii;
    s.m_dirs = m_dirs;
    return s;
  }

  // Default directions: equal arcs for dim 2; the deterministic product grid
  // for dim 3 when m_dirs is a perfect square; i.i.d. uniform otherwise.
  int nstar = 0;
  DirectionMode mode;
  if (opts.direction_mode) {
    mode = *opts.direction_mode;
    if (mode == DirectionMode::Deterministic && dim >= 3 && !is_power(m_dirs, dim - 1, &nstar))
      throw std::invalid_argument("deterministic spectrum directions need m_dirs to be a (dim-1)-th power");
  } else if (dim == 2 || (dim == 3 && is_power(m_dirs, dim - 1, &nstar))) {
    mode = DirectionMode::Deterministic;
  } else {
    mode = DirectionMode::Randomized;
  }

  Eigen::MatrixXd dirs;
  if (mode == DirectionMode::Deterministic) {
    if (dim == 2)
      dirs = directions_deterministic(2, {m_dirs});
    else
      dirs = directions_deterministic(dim, std::vector<int>(static_cast<std::size_t>(dim - 1), nstar));
  } else {
    dirs = directions_random(dim, m_dirs, mix_seed(opts.direction_seed) ^ static_cast<std::uint64_t>(dim));
  }

  GridSpec gs;
  gs.dim = dim;
  gs.n = m_radii * m_dirs;
  gs.n_radii = m_radii;
  gs.n_dirs = m_dirs;
  gs.n_origin = 0;
  AugmentedGrid grid = build_grid(gs, dirs);

  Spectrum s;
  s.dim = dim;
  s.m_radii = m_radii;
  s.m_dirs = m_dirs;
  s.eigenvalues = centered_distance_eigenvalues(grid.points);
  return s;
}

ProductSpectrum product_spectrum(const Spectrum& a, const Spectrum& b, int truncation) {
  if (truncation < 1) throw std::invalid_argument("truncation must be >= 1");
  const auto& ea = a.eigenvalues;
  const auto& eb = b.eigenvalues;
  if (ea.empty() || eb.empty()) throw std::invalid_argument("empty spectrum");

  ProductSpectrum out;
  out.total_sum = a.magnitude_sum() * b.magnitude_sum();
  out.truncation = truncation;

  // Largest products of two magnitude-sorted lists without materializing the
  // full outer product: frontier heap over (i, j), pushing (i+1, j) always
  // and (i, j+1) only from the first row.
  struct Entry {
    double value;
    int i, j;
    bool operator<(const Entry& o) const { return value < o.value; }
  };
  auto prod = [&](int i, int j) {
    return std::abs(ea[static_cast<std::size_t>(i)]) * std::abs(eb[static_cast<std::size_t>(j)]);
  };
  const int na = static_cast<int>(ea.size());
  const int nb = static_cast<int>(eb.size());
  std::priority_queue<Entry> heap;
  heap.push({prod(0, 0), 0, 0});
  const long long want = std::min<long long>(truncation, static_cast<long long>(na) * nb);
  out.lambdas.reserve(static_cast<std::size_t>(want));
  while (static_cast<long long>(out.lambdas.size()) < want) {
    Entry e = heap.top();
    heap.pop();
    out.lambdas.push_back(e.value);
    out.retained_sum += e.value;
    if (e.i + 1 < na) heap.push({prod(e.i + 1, e.j), e.i + 1, e.j});
    if (e.i == 0 && e.j + 1 < nb) heap.push({prod(0, e.j + 1), 0, e.j + 1});
  }
  return out;
}

namespace {

constexpr double kArctanCut = 0.05;     // switch to the series tail below this
constexpr double kProfileTol = 2.5e-5;  // quadrature refinement target

double chi1_cdf(double t) { return t <= 0.0 ? 0.0 : std::erf(std::sqrt(0.5 * t)); }

}  // namespace

WeightedChiSquaredDist::WeightedChiSquaredDist(std::vector<double> lambdas)
    : lambdas_(std::move(lambdas)) {
  if (lambdas_.empty()) throw std::invalid_argument("need at least one weight");
  for (double l : lambdas_)
    if (!std::isfinite(l) || l <= 0.0) throw std::invalid_argument("weights must be positive and finite");
  std::sort(lambdas_.begin(), lambdas_.end(), std::greater<>());
  weight_sum_ = std::accumulate(lambdas_.begin(), lambdas_.end(), 0.0);

  const std::size_t k = lambdas_.size();
  for (int r = 0; r < 8; ++r) suffix_pow_[r].assign(k + 1, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    double w = 1.0;
    for (int r = 0; r < 8; ++r) {
      w *= lambdas_[i];
      suffix_pow_[r][i] = suffix_pow_[r][i + 1] + w;
    }
  }
  if (lambdas_.size() > 1) build_profile();
}

double WeightedChiSquaredDist::arctan_sum(double u) const {
  const double cut = kArctanCut / u;
  auto it = std::lower_bound(lambdas_.begin(), lambdas_.end(), cut, std::greater<>());
  const std::size_t head = static_cast<std::size_t>(it - lambdas_.begin());
  double s = 0.0;
  for (std::size_t i = 0; i < head; ++i) s += std::atan(lambdas_[i] * u);
  const double u2 = u * u;
  s += u * suffix_pow_[0][head] - u * u2 / 3.0 * suffix_pow_[2][head] +
       u * u2 * u2 / 5.0 * suffix_pow_[4][head] - u * u2 * u2 * u2 / 7.0 * suffix_pow_[6][head];
  return s;
}

double WeightedChiSquaredDist::log_modulus(double u) const {
  const double cut = kArctanCut / u;
  auto it = std::lower_bound(lambdas_.begin(), lambdas_.end(), cut, std::greater<>());
  const std::size_t head = static_cast<std::size_t>(it - lambdas_.begin());
  double s = 0.0;
  for (std::size_t i = 0; i < head; ++i) {
    double z = lambdas_[i] * u;
    s += std::log1p(z * z);
  }
  const double u2 = u * u;
  s += u2 * suffix_pow_[1][head] - u2 * u2 / 2.0 * suffix_pow_[3][head] +
       u2 * u2 * u2 / 3.0 * suffix_pow_[5][head] - u2 * u2 * u2 * u2 / 4.0 * suffix_pow_[7][head];
  return 0.25 * s;
}

void WeightedChiSquaredDist::build_profile() {
  double upper = 1.0;
  while (std::exp(-log_modulus(upper)) / upper > 1e-10 && upper < 1e9) upper *= 1.5;

  // wide enough that every quantile of practical interest interpolates the
  // table; the far right tail falls back to an exponential bound
  table_x_max_ = std::max(4.0 * (weight_sum_ + 1.0), 16.0 * lambdas_[0]);

  const double probe[] = {-0.9 * weight_sum_, 0.0, weight_sum_, 2.0 * weight_sum_ + 1.0,
                          table_x_max_};

  std::vector<double> prev;  // previous refinement's integral values at probes
  for (int n = 1 << 12; n <= (1 << 20); n *= 2) {
    const double h = upper / n;
    nodes_.assign(static_cast<std::size_t>(n) + 1, 0.0);
    node_arctan_.assign(nodes_.size(), 0.0);
    node_inv_modulus_.assign(nodes_.size(), 0.0);
    node_weight_.assign(nodes_.size(), 0.0);
    for (int i = 0; i <= n; ++i) {
      double u = i == 0 ? h * 1e-8 : h * i;
      double simpson = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      nodes_[static_cast<std::size_t>(i)] = u;
      node_arctan_[static_cast<std::size_t>(i)] = arctan_sum(u);
      node_inv_modulus_[static_cast<std::size_t>(i)] = std::exp(-log_modulus(u));
      node_weight_[static_cast<std::size_t>(i)] = simpson * h / 3.0 / u * node_inv_modulus_[static_cast<std::size_t>(i)];
    }
    std::vector<double> cur;
    cur.reserve(std::size(probe));
    for (double x : probe) cur.push_back(integral(x + weight_sum_));
    if (!prev.empty()) {
      double worst = 0.0;
      for (std::size_t i = 0; i < cur.size(); ++i) worst = std::max(worst, std::abs(cur[i] - prev[i]));
      if (worst < kProfileTol * std::numbers::pi) break;
    }
    prev = std::move(cur);
  }

  // Tabulate the inversion on a uniform x grid and clamp to a running max:
  // the interpolated CDF is then non-decreasing by construction. One pass
  // over the profile nodes, rotating per-node phase increments instead of
  // evaluating sin at every (node, x) pair.
  const int table_size = 4096;
  cdf_table_.assign(table_size, 0.0);
  table_dx_ = (table_x_max_ + weight_sum_) / (table_size - 1);
  std::vector<double> acc(static_cast<std::size_t>(table_size), 0.0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const double w = node_weight_[i];
    const double phase0 = 0.5 * node_arctan_[i];  // theta at y = 0
    const double step = 0.5 * table_dx_ * nodes_[i];
    const double cs = std::cos(step), sn = std::sin(step);
    double c = std::cos(phase0), s = std::sin(phase0);
    for (int k = 0; k < table_size; ++k) {
      acc[static_cast<std::size_t>(k)] += w * s;
      const double c2 = c * cs + s * sn;  // rotate phase by -step
      s = s * cs - c * sn;
      c = c2;
    }
  }
  double running = 0.0;
  for (int k = 0; k < table_size; ++k) {
    double raw = std::clamp(0.5 - acc[static_cast<std::size_t>(k)] / std::numbers::pi, 0.0, 1.0);
    running = std::max(running, raw);
    cdf_table_[static_cast<std::size_t>(k)] = running;
  }

  nodes_.clear();
  nodes_.shrink_to_fit();
  node_arctan_.clear();
  node_arctan_.shrink_to_fit();
  node_inv_modulus_.clear();
  node_inv_modulus_.shrink_to_fit();
  node_weight_.clear();
  node_weight_.shrink_to_fit();
}

double WeightedChiSquaredDist::integral(double y) const {
  double acc = 0.0;
  const std::size_t n = nodes_.size();
  for (std::size_t i = 0; i < n; ++i)
    acc += node_weight_[i] * std::sin(0.5 * node_arctan_[i] - 0.5 * y * nodes_[i]);
  return acc;
}

double WeightedChiSquaredDist::upper_tail_bound(double x) const {
  const double s = 0.25 / lambdas_[0];
  double ln_mgf = 0.0;
  for (double l : lambdas_) ln_mgf += -s * l - 0.5 * std::log1p(-2.0 * s * l);
  return std::clamp(std::exp(ln_mgf - s * x), 0.0, 1.0);
}

double WeightedChiSquaredDist::cdf(double x) const {
  if (lambdas_.size() == 1) return chi1_cdf(x / lambdas_[0] + 1.0);
  if (x <= -weight_sum_) return 0.0;
  if (x >= table_x_max_)
    return std::max(cdf_table_.back(), 1.0 - upper_tail_bound(x));
  const double pos = (x + weight_sum_) / table_dx_;
  auto idx = static_cast<std::size_t>(pos);
  idx = std::min(idx, cdf_table_.size() - 2);
  const double frac = pos - static_cast<double>(idx);
  return cdf_table_[idx] + frac * (cdf_table_[idx + 1] - cdf_table_[idx]);
}

double WeightedChiSquaredDist::quantile(double prob, double cdf_tol) const {
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("probability must lie in (0,1)");
  if (lambdas_.size() == 1) {
    double lo = 0.0, hi = 1.0;
    while (chi1_cdf(hi) < prob) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (chi1_cdf(mid) < prob ? lo : hi) = mid;
    }
    return lambdas_[0] * (0.5 * (lo + hi) - 1.0);
  }

  double lo = -weight_sum_;
  double hi = 1.0;
  int expand = 0;
  while (cdf(hi) < prob) {
    hi *= 2.0;
    if (++expand > 60) throw std::runtime_error("quantile bracket failure: CDF never reached the target");
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    double c = cdf(mid);
    if (std::abs(c - prob) <= cdf_tol && it > 10) return mid;
    (c < prob ? lo : hi) = mid;
  }
  return mid;
}

double cdf_weighted_chisq(const ProductSpectrum& products, double x) {
  return WeightedChiSquaredDist(products.lambdas).cdf(x);
}

double quantile_weighted_chisq(const ProductSpectrum& products, double prob) {
  return WeightedChiSquaredDist(products.lambdas).quantile(prob);
}

CriticalValueEngine::CriticalValueEngine(SpectrumOptions opts, std::string cache_path)
    : opts_(opts), cache_path_(std::move(cache_path)) {}

const Spectrum& CriticalValueEngine::margin_spectrum(int dim) {
  auto it = spectra_.find(dim);
  if (it == spectra_.end()) {
    it = spectra_.emplace(dim, spectrum(dim, opts_)).first;
    if (dim > 1) ++spectra_computed_;
  }
  return it->second;
}

std::optional<double> CriticalValueEngine::cache_lookup(int p, int q, double alpha) const {
  if (cache_path_.empty()) return std::nullopt;
  std::ifstream in(cache_path_);
  if (!in) return std::nullopt;
  std::string line;
  std::optional<double> found;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (j.value("p", -1) == p && j.value("q", -1) == q &&
          j.value("alpha", -1.0) == alpha && j.value("m_radii", -1) == opts_.m_radii &&
          j.value("m_dirs", -1) == opts_.m_dirs && j.value("truncation", -1) == opts_.truncation &&
          j.value("generator_version", "") == kCriticalValueGeneratorVersion)
        found = j.at("value").get<double>();
    } catch (const std::exception&) {
      // skip malformed lines
    }
  }
  return found;
}

void CriticalValueEngine::cache_store(int p, int q, double alpha, double value) const {
  if (cache_path_.empty()) return;
  std::ofstream out(cache_path_, std::ios::app);
  if (!out) {
    std::cerr << "warning: cannot write critical-value cache at " << cache_path_ << "\n";
    return;
  }
  nlohmann::json j;
  j["p"] = p;
  j["q"] = q;
  j["alpha"] = alpha;
  j["m_radii"] = opts_.m_radii;
  j["m_dirs"] = opts_.m_dirs;
  j["truncation"] = opts_.truncation;
  j["value"] = value;
  j["generator_version"] = kCriticalValueGeneratorVersion;
  out << j.dump() << '\n';
  if (!out) std::cerr << "warning: failed appending to critical-value cache at " << cache_path_ << "\n";
}

const WeightedChiSquaredDist& CriticalValueEngine::distribution(int p, int q) {
  if (p < 1 || q < 1) throw std::invalid_argument("dimensions must be >= 1");
  auto key = std::minmax(p, q);
  auto it = dists_.find(key);
  if (it == dists_.end()) {
    ProductSpectrum prod = product_spectrum(margin_spectrum(key.first), margin_spectrum(key.second),
                                            opts_.truncation);
    it = dists_.emplace(key, WeightedChiSquaredDist(std::move(prod.lambdas))).first;
  }
  return it->second;
}

CriticalValueEngine::Result CriticalValueEngine::critical_value(int p, int q, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (p < 1 || q < 1) throw std::invalid_argument("dimensions must be >= 1");
  if (auto hit = cache_lookup(p, q, alpha)) return {*hit, true};

  double value = distribution(p, q).quantile(1.0 - alpha);
  cache_store(p, q, alpha, value);
  return {value, false};
}

double MonteCarloNull::quantile(double prob) const {
  if (sorted_values.empty()) throw std::invalid_argument("empty replicate set");
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("probability must lie in (0,1)");
  const auto reps = static_cast<long long>(sorted_values.size());
  long long k = static_cast<long long>(std::ceil(prob * static_cast<double>(reps + 1)));
  k = std::clamp<long long>(k, 1, reps);
  return sorted_values[static_cast<std::size_t>(k - 1)];
}

MonteCarloNull monte_carlo_null_from_grids(const AugmentedGrid& grid_x, const AugmentedGrid& grid_y,
                                           int reps, std::uint64_t seed, int threads) {
  if (reps < 1) throw std::invalid_argument("need at least one replicate");
  if (grid_x.points.rows() != grid_y.points.rows())
    throw std::invalid_argument("grids must have equal size");
  const int n = static_cast<int>(grid_x.points.rows());

  const Eigen::MatrixXd a = pairwise_distances(grid_x.points);
  const Eigen::MatrixXd b = pairwise_distances(grid_y.points);

  MonteCarloNull out;
  out.sorted_values.assign(static_cast<std::size_t>(reps), 0.0);
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    std::mt19937_64 rng = substream(seed, r);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    out.sorted_values[r] = n * dcov_fast_from_distances(a, b, perm);
  });
  std::sort(out.sorted_values.begin(), out.sorted_values.end());
  return out;
}

MonteCarloNull monte_carlo_null(int n, int p, int q, int reps, std::uint64_t seed, int threads) {
  AugmentedGrid gx = make_grid(n, p, mix_seed(seed ^ 0x9e01ULL));
  AugmentedGrid gy = make_grid(n, q, mix_seed(seed ^ 0x9e02ULL));
  return monte_carlo_null_from_grids(gx, gy, reps, seed, threads);
}

}  // namespace cordcov
