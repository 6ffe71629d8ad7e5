#include "cordcov/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "cordcov/rng.hpp"

namespace cordcov {

namespace {

constexpr double kPi = std::numbers::pi;

long long checked_product(const std::vector<int>& factors) {
  long long prod = 1;
  for (int f : factors) {
    if (f < 1) throw std::invalid_argument("direction factor must be positive");
    prod *= f;
    if (prod > 1'000'000'000LL) throw std::invalid_argument("direction factor product overflows");
  }
  return prod;
}

double binomial(int m, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (m - k + i) / i;
  return r;
}

}  // namespace

void GridSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("grid dimension must be >= 1");
  if (n_radii < 1 || n_dirs < 1) throw std::invalid_argument("n_radii and n_dirs must be positive");
  if (n_origin < 0 || n_origin >= std::min(n_radii, n_dirs))
    throw std::invalid_argument("need 0 <= n_origin < min(n_radii, n_dirs)");
  if (n != n_radii * n_dirs + n_origin)
    throw std::invalid_argument("n != n_radii * n_dirs + n_origin");
  if (dim == 1 && n_dirs != 2) throw std::invalid_argument("dim 1 requires n_dirs == 2");
  if (!direction_factors.empty()) {
    if (static_cast<int>(direction_factors.size()) != dim - 1)
      throw std::invalid_argument("need dim - 1 direction factors");
    if (checked_product(direction_factors) != n_dirs)
      throw std::invalid_argument("direction factors must multiply to n_dirs");
  }
}

GridSpec factorize(int n, int dim, DirectionMode mode) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  if (n < 4) throw std::invalid_argument("need n >= 4 to factorize the grid");

  GridSpec spec;
  spec.dim = dim;
  spec.n = n;

  if (dim == 1) {
    spec.n_dirs = 2;
    spec.n_radii = n / 2;
    spec.n_origin = n - 2 * spec.n_radii;
    spec.validate();
    return spec;
  }

  auto ok = [n](int n_radii, int n_dirs) {
    int n0 = n - n_radii * n_dirs;
    return n_radii >= 1 && n_dirs >= 1 && n0 >= 0 && n0 < std::min(n_radii, n_dirs);
  };

  if (mode == DirectionMode::Randomized) {
    int ns = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
    while (ns >= 1 && !ok(n / ns, ns)) --ns;
    if (ns < 1) throw std::invalid_argument("no valid factorization found");
    spec.n_dirs = ns;
    spec.n_radii = n / ns;
    spec.n_origin = n - spec.n_radii * spec.n_dirs;
  } else {
    int nstar = static_cast<int>(std::floor(std::pow(static_cast<double>(n), 1.0 / (2.0 * dim - 2.0))));
    nstar = std::max(nstar, 2);
    auto dirs_of = [dim](int s) -> long long {
      long long prod = 1;
      for (int m = 0; m < dim - 1; ++m) {
        prod *= s;
        if (prod > 1'000'000'000LL) return prod;
      }
      return prod;
    };
    while (nstar >= 1) {
      long long ns = dirs_of(nstar);
      if (ns <= n && ok(static_cast<int>(n / ns), static_cast<int>(ns))) break;
      --nstar;
    }
    if (nstar < 1) throw std::invalid_argument("no valid factorization found");
    spec.n_dirs = static_cast<int>(dirs_of(nstar));
    spec.n_radii = n / spec.n_dirs;
    spec.n_origin = n - spec.n_radii * spec.n_dirs;
    spec.direction_factors.assign(static_cast<std::size_t>(dim - 1), nstar);
  }
  spec.validate();
  return spec;
}

DirectionMode default_direction_mode(int dim) {
  return dim <= 3 ? DirectionMode::Deterministic : DirectionMode::Randomized;
}

double sin_power_integral(int m, double theta) {
  if (m < 0) throw std::invalid_argument("sin power must be >= 0");
  if (theta < 0.0 || theta > kPi + 1e-12) throw std::invalid_argument("angle must lie in [0, pi]");
  theta = std::min(theta, kPi);
  if (m == 0) return theta;
  double sum = 0.0;
  if (m % 2 == 1) {
    for (int k = 0; k <= (m - 1) / 2; ++k) {
      double sign = ((m - 1) / 2 - k) % 2 == 0 ? 1.0 : -1.0;
      sum += sign * binomial(m, k) * (1.0 - std::cos((m - 2 * k) * theta)) / (m - 2 * k);
    }
    return sum / std::pow(2.0, m - 1);
  }
  for (int k = 0; k <= m / 2 - 1; ++k) {
    double sign = (m / 2 - k) % 2 == 0 ? 1.0 : -1.0;
    sum += sign * binomial(m, k) * std::sin((m - 2 * k) * theta) / (m - 2 * k);
  }
  return binomial(m, m / 2) * theta / std::pow(2.0, m) + sum / std::pow(2.0, m - 1);
}

double sin_power_integral_total(int m) {
  if (m < 0) throw std::invalid_argument("sin power must be >= 0");
  return std::sqrt(kPi) * std::exp(std::lgamma((m + 1) / 2.0) - std::lgamma(m / 2.0 + 1.0));
}

double sin_power_integral_inverse(int m, double target) {
  double total = sin_power_integral(m, kPi);
  if (target < -1e-15 || target > total * (1.0 + 1e-12))
    throw std::invalid_argument("target outside [0, integral over [0, pi]]");
  target = std::clamp(target, 0.0, total);
  if (target == 0.0) return 0.0;
  if (target == total) return kPi;
  double lo = 0.0, hi = kPi;
  double tol = 1e-12 * total;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double val = sin_power_integral(m, mid);
    if (std::abs(val - target) <= tol) return mid;
    (val < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd directions_deterministic(int dim, const std::vector<int>& factors) {
  if (dim < 2) throw std::invalid_argument("deterministic directions need dim >= 2");
  if (static_cast<int>(factors.size()) != dim - 1)
    throw std::invalid_argument("need dim - 1 direction factors");
  long long count = checked_product(factors);

  // Angle grids per spherical coordinate. The polar angles phi_m (m <= dim-2)
  // are inverse-transformed so that the coordinate density sin^(dim-1-m)
  // integrates uniformly; the azimuth is equally spaced on [0, 2*pi).
  std::vector<std::vector<double>> angles(static_cast<std::size_t>(dim - 1));
  for (int m = 1; m <= dim - 1; ++m) {
    int nm = factors[static_cast<std::size_t>(m - 1)];
    std::vector<double>& phi = angles[static_cast<std::size_t>(m - 1)];
    phi.resize(static_cast<std::size_t>(nm));
    for (int j = 1; j <= nm; ++j) {
      double u = (2.0 * j - 1.0) / (2.0 * nm);
      if (m <= dim - 2) {
        double scale = sin_power_integral_total(dim - 1 - m);
        phi[static_cast<std::size_t>(j - 1)] = sin_power_integral_inverse(dim - 1 - m, scale * u);
      } else {
        phi[static_cast<std::size_t>(j - 1)] = 2.0 * kPi * u;
      }
    }
  }

  Eigen::MatrixXd dirs(count, dim);
  std::vector<int> idx(static_cast<std::size_t>(dim - 1), 0);
  for (long long row = 0; row < count; ++row) {
    double sin_prod = 1.0;
    for (int m = 0; m < dim - 1; ++m) {
      double phi = angles[static_cast<std::size_t>(m)][static_cast<std::size_t>(idx[static_cast<std::size_t>(m)])];
      dirs(row, m) = sin_prod * std::cos(phi);
      sin_prod *= std::sin(phi);
    }
    dirs(row, dim - 1) = sin_prod;
    // lexicographic ordering, last index fastest
    for (int m = dim - 2; m >= 0; --m) {
      if (++idx[static_cast<std::size_t>(m)] < factors[static_cast<std::size_t>(m)]) break;
      idx[static_cast<std::size_t>(m)] = 0;
    }
  }
  return dirs;
}

Eigen::MatrixXd directions_random(int dim, int n_dirs, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  if (n_dirs < 1) throw std::invalid_argument("need at least one direction");
  std::mt19937_64 rng = substream(seed, 0);
  Eigen::MatrixXd dirs(n_dirs, dim);
  for (int k = 0; k < n_dirs; ++k) {
    double norm = 0.0;
    do {
      for (int c = 0; c < dim; ++c) dirs(k, c) = draw_gaussian(rng);
      norm = dirs.row(k).norm();
    } while (norm < 1e-12);
    dirs.row(k) /= norm;
  }
  return dirs;
}

AugmentedGrid build_grid(const GridSpec& spec, const Eigen::MatrixXd& directions) {
  spec.validate();
  if (directions.rows() != spec.n_dirs || directions.cols() != spec.dim)
    throw std::invalid_argument("direction matrix does not match the grid spec");
  for (int k = 0; k < spec.n_dirs; ++k) {
    if (std::abs(directions.row(k).norm() - 1.0) > 1e-12)
      throw std::invalid_argument("directions must have unit norm");
    for (int l = 0; l < k; ++l)
      if ((directions.row(k) - directions.row(l)).cwiseAbs().maxCoeff() == 0.0)
        throw std::invalid_argument("directions must be pairwise distinct");
  }

  AugmentedGrid grid;
  grid.spec = spec;
  grid.directions = directions;
  grid.points = Eigen::MatrixXd::Zero(spec.n, spec.dim);
  int row = spec.n_origin;
  for (int k = 0; k < spec.n_dirs; ++k)
    for (int j = 1; j <= spec.n_radii; ++j)
      grid.points.row(row++) = directions.row(k) * (static_cast<double>(j) / (spec.n_radii + 1));
  return grid;
}

AugmentedGrid make_grid(int n, int dim, DirectionMode mode, std::uint64_t seed) {
  GridSpec spec = factorize(n, dim, mode);
  Eigen::MatrixXd dirs;
  if (dim == 1) {
    dirs.resize(2, 1);
    dirs << 1.0, -1.0;
  } else if (mode == DirectionMode::Deterministic) {
    dirs = directions_deterministic(dim, spec.direction_factors);
  } else {
    dirs = directions_random(dim, spec.n_dirs, seed);
  }
  return build_grid(spec, dirs);
}

AugmentedGrid make_grid(int n, int dim, std::uint64_t seed) {
  return make_grid(n, dim, default_direction_mode(dim), seed);
}

void write_grid_csv(const AugmentedGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  for (Eigen::Index i = 0; i < grid.points.rows(); ++i) {
    for (Eigen::Index c = 0; c < grid.points.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", grid.points(i, c));
      out << buf << (c + 1 < grid.points.cols() ? "," : "");
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace cordcov
