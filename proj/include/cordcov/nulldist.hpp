#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cordcov/grid.hpp"

namespace cordcov {

// Non-zero eigenvalues of the centered distance kernel on the unit ball in
// dimension `dim`, estimated on an M_R x M_S ball grid (closed form for
// dim == 1). All entries are negative, sorted by descending magnitude.
struct Spectrum {
  int dim = 0;
  int m_radii = 0;
  int m_dirs = 0;
  std::vector<double> eigenvalues;

  double magnitude_sum() const;
};

struct SpectrumOptions {
  // Grid resolution; 0 selects the per-dimension default. The direction count
  // drives the discretization error of the eigenvalues in higher dimensions,
  // so the defaults shift budget from radii to directions as dim grows; see
  // resolved_spectrum_grid.
  int m_radii = 0;
  int m_dirs = 0;
  // Directions for the spectrum grid. Defaults (nullopt): equispaced for
  // dim == 2; the deterministic product construction for dim == 3 when m_dirs
  // is a perfect square (the default 225 is); i.i.d. uniform with a fixed
  // per-dimension seed otherwise. Deterministic mode for dim >= 3 requires
  // m_dirs to be a (dim-1)-th power.
  std::optional<DirectionMode> direction_mode;
  std::uint64_t direction_seed = 0x5eed0;
  int truncation = 100000;  // product-spectrum length K
};

// The (m_radii, m_dirs) actually used for a margin of dimension `dim`.
std::pair<int, int> resolved_spectrum_grid(int dim, const SpectrumOptions& opts);

// Eigenvalues of (I - J/M) D (I - J/M) / M for the distance matrix D of the
// given points; the (numerically) zero eigenvalue is dropped.
std::vector<double> centered_distance_eigenvalues(const Eigen::MatrixXd& points);

Spectrum spectrum(int dim, const SpectrumOptions& opts = {});
Spectrum spectrum_closed_form_1d(int count);

// Sorted positive products of two spectra, truncated to length K.
struct ProductSpectrum {
  std::vector<double> lambdas;     // descending, positive
  double total_sum = 0.0;          // sum over all (M-1)^2 products
  double retained_sum = 0.0;       // sum over the K retained products
  int truncation = 0;
};

ProductSpectrum product_spectrum(const Spectrum& a, const Spectrum& b, int truncation);

// CDF and quantiles of T = sum_k lambda_k (xi_k^2 - 1) with positive weights,
// by numerical inversion of the characteristic function. The oscillatory
// integral profile is precomputed once per weight list; target absolute CDF
// accuracy 1e-4.
class WeightedChiSquaredDist {
 public:
  explicit WeightedChiSquaredDist(std::vector<double> lambdas);

  double cdf(double x) const;
  // Smallest x with CDF(x) >= prob, located to |CDF(x) - prob| <= cdf_tol.
  double quantile(double prob, double cdf_tol = 2e-4) const;
  double support_min() const { return -weight_sum_; }

 private:
  void build_profile();
  double arctan_sum(double u) const;      // sum_k atan(lambda_k u)
  double log_modulus(double u) const;     // (1/4) sum_k log(1 + lambda_k^2 u^2)
  double integral(double y) const;        // profile-based oscillatory integral
  double upper_tail_bound(double x) const;

  std::vector<double> lambdas_;           // descending
  double weight_sum_ = 0.0;
  // suffix power sums for the small-argument tail of the integrand
  std::vector<double> suffix_pow_[8];
  // integration profile (used during construction only)
  std::vector<double> nodes_, node_arctan_, node_inv_modulus_, node_weight_;
  // monotone CDF table on [-weight_sum_, table_x_max_]: raw inversion values
  // under a running max, queried by linear interpolation, so the CDF is
  // non-decreasing by construction
  std::vector<double> cdf_table_;
  double table_x_max_ = 0.0;
  double table_dx_ = 0.0;
};

double cdf_weighted_chisq(const ProductSpectrum& products, double x);
double quantile_weighted_chisq(const ProductSpectrum& products, double prob);

// Critical values Q_{1-alpha} with a line-delimited JSON cache. Spectra are
// memoized per dimension within one engine instance; cache I/O failures
// degrade to a warning and the value is recomputed.
class CriticalValueEngine {
 public:
  explicit CriticalValueEngine(SpectrumOptions opts = {}, std::string cache_path = {});

  struct Result {
    double value = 0.0;
    bool from_cache = false;
  };
  Result critical_value(int p, int q, double alpha);

  // The limiting null distribution for dimensions (p, q); built on demand.
  const WeightedChiSquaredDist& distribution(int p, int q);

  const Spectrum& margin_spectrum(int dim);
  int spectra_computed() const { return spectra_computed_; }
  const SpectrumOptions& options() const { return opts_; }

 private:
  std::optional<double> cache_lookup(int p, int q, double alpha) const;
  void cache_store(int p, int q, double alpha, double value) const;

  SpectrumOptions opts_;
  std::string cache_path_;
  std::map<int, Spectrum> spectra_;
  std::map<std::pair<int, int>, WeightedChiSquaredDist> dists_;
  int spectra_computed_ = 0;
};

extern const char* const kCriticalValueGeneratorVersion;

// Null distribution of the test statistic by simulation. Exploits
// distribution-freeness: each replicate pairs the X grid with a uniformly
// permuted Y grid and evaluates n * dCov^2_n, with no data generation or
// assignment solve. Replicates use per-index RNG streams, so results do not
// depend on the number of worker threads.
struct MonteCarloNull {
  std::vector<double> sorted_values;

  // k-th order statistic with k = ceil(prob * (reps + 1)), clamped.
  double quantile(double prob) const;
};

MonteCarloNull monte_carlo_null(int n, int p, int q, int reps, std::uint64_t seed,
                                int threads = 1);

// Same, pairing two explicitly constructed grids (the exact null law of the
// statistic computed with those grids).
MonteCarloNull monte_carlo_null_from_grids(const AugmentedGrid& grid_x, const AugmentedGrid& grid_y,
                                           int reps, std::uint64_t seed, int threads = 1);

}  // namespace cordcov
