#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace cordcov {

enum class DirectionMode { Deterministic, Randomized };

// Factorization n = n_radii * n_dirs + n_origin governing an augmented
// ball grid in dimension `dim`.
struct GridSpec {
  int dim = 0;
  int n = 0;
  int n_radii = 0;
  int n_dirs = 0;
  int n_origin = 0;
  // n_1, ..., n_{dim-1} with product n_dirs; empty for dim == 1 or when
  // directions are drawn at random.
  std::vector<int> direction_factors;

  // Throws std::invalid_argument if the factorization constraints are violated.
  void validate() const;
};

// Picks a factorization for sample size n: n_dirs = 2 when dim == 1,
// n_dirs ~ sqrt(n) for randomized directions, n_dirs = n_*^(dim-1) with
// n_* ~ n^(1/(2 dim - 2)) for the deterministic construction. A decrement
// fix-up enforces n_origin < min(n_radii, n_dirs). Requires n >= 4.
GridSpec factorize(int n, int dim, DirectionMode mode);

// Default direction mode by dimension: deterministic through dim == 3,
// randomized above (the deterministic factor collapses to 2^(dim-1) for
// moderate n, starving the radial resolution).
DirectionMode default_direction_mode(int dim);

// Antiderivative of sin^m over [0, theta], theta in [0, pi]; closed form.
double sin_power_integral(int m, double theta);

// Value of the full integral over [0, pi]: sqrt(pi)*Gamma((m+1)/2)/Gamma(m/2+1).
double sin_power_integral_total(int m);

// Inverse of sin_power_integral in theta, by bisection; `target` must lie in
// [0, sin_power_integral_total(m)].
double sin_power_integral_inverse(int m, double target);

// The deterministic direction set: all points with spherical angles placed at
// inverse-transformed midpoints (2j-1)/(2 n_m); rows are unit vectors, ordered
// lexicographically in the angle indices. Requires dim >= 2.
Eigen::MatrixXd directions_deterministic(int dim, const std::vector<int>& factors);

// n_dirs i.i.d. uniform draws on the unit sphere, reproducible by seed.
Eigen::MatrixXd directions_random(int dim, int n_dirs, std::uint64_t seed);

struct AugmentedGrid {
  GridSpec spec;
  // n x dim; the first n_origin rows are the zero vector, the rest are
  // (j/(n_radii+1)) * direction_k ordered by (k, j), j innermost.
  Eigen::MatrixXd points;
  // n_dirs x dim unit vectors.
  Eigen::MatrixXd directions;
};

// Assembles the grid multiset for a validated spec. `directions` must have
// spec.n_dirs unit rows; for dim == 1 they must be +1 and -1.
AugmentedGrid build_grid(const GridSpec& spec, const Eigen::MatrixXd& directions);

// factorize + default/explicit directions + build_grid in one call.
AugmentedGrid make_grid(int n, int dim, DirectionMode mode, std::uint64_t seed);
AugmentedGrid make_grid(int n, int dim, std::uint64_t seed);

// One point per row, 17 significant digits.
void write_grid_csv(const AugmentedGrid& grid, const std::string& path);

}  // namespace cordcov
