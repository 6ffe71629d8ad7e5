#pragma once

#include <cmath>
#include <numbers>

namespace cordcov {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Quantile function of the standard Cauchy distribution (t with 1 dof).
inline double cauchy_quantile(double u) { return std::tan(std::numbers::pi * (u - 0.5)); }

inline double binomial_standard_error(double rate, int trials) {
  return trials > 0 ? std::sqrt(rate * (1.0 - rate) / trials) : 0.0;
}

}  // namespace cordcov
