#pragma once

#include <optional>

namespace cordcov {

// Tabulated reference critical values for dimensions (p, q) in [1,10]^2 at
// levels 0.1, 0.05, 0.01; reference accuracy 5e-3.
inline std::optional<double> reference_critical_value(int p, int q, double alpha) {
  static constexpr double k10[10][10] = {
      {0.306, 0.215, 0.172, 0.149, 0.133, 0.122, 0.113, 0.106, 0.101, 0.095},
      {0.215, 0.145, 0.114, 0.098, 0.087, 0.080, 0.075, 0.069, 0.065, 0.063},
      {0.172, 0.114, 0.090, 0.077, 0.069, 0.063, 0.059, 0.055, 0.052, 0.049},
      {0.149, 0.098, 0.077, 0.066, 0.059, 0.054, 0.049, 0.046, 0.044, 0.042},
      {0.133, 0.087, 0.069, 0.059, 0.052, 0.047, 0.044, 0.041, 0.039, 0.037},
      {0.122, 0.080, 0.063, 0.054, 0.047, 0.044, 0.040, 0.037, 0.036, 0.034},
      {0.113, 0.075, 0.059, 0.049, 0.044, 0.040, 0.037, 0.035, 0.034, 0.032},
      {0.106, 0.069, 0.055, 0.046, 0.041, 0.037, 0.035, 0.033, 0.031, 0.030},
      {0.101, 0.065, 0.052, 0.044, 0.039, 0.036, 0.034, 0.031, 0.030, 0.028},
      {0.095, 0.063, 0.049, 0.042, 0.037, 0.034, 0.032, 0.030, 0.028, 0.027}};
  static constexpr double k05[10][10] = {
      {0.490, 0.320, 0.249, 0.211, 0.187, 0.172, 0.156, 0.146, 0.139, 0.130},
      {0.320, 0.205, 0.159, 0.135, 0.119, 0.110, 0.101, 0.095, 0.088, 0.085},
      {0.249, 0.159, 0.124, 0.105, 0.093, 0.086, 0.079, 0.073, 0.069, 0.066},
      {0.211, 0.135, 0.105, 0.089, 0.079, 0.072, 0.066, 0.062, 0.059, 0.056},
      {0.187, 0.119, 0.093, 0.079, 0.070, 0.064, 0.059, 0.055, 0.052, 0.049},
      {0.172, 0.110, 0.086, 0.072, 0.064, 0.058, 0.054, 0.050, 0.047, 0.045},
      {0.156, 0.101, 0.079, 0.066, 0.059, 0.054, 0.049, 0.047, 0.044, 0.042},
      {0.146, 0.095, 0.073, 0.062, 0.055, 0.050, 0.047, 0.044, 0.041, 0.039},
      {0.139, 0.088, 0.069, 0.059, 0.052, 0.047, 0.044, 0.041, 0.039, 0.037},
      {0.130, 0.085, 0.066, 0.056, 0.049, 0.045, 0.042, 0.039, 0.037, 0.035}};
  static constexpr double k01[10][10] = {
      {0.945, 0.563, 0.421, 0.349, 0.303, 0.273, 0.250, 0.232, 0.219, 0.208},
      {0.563, 0.338, 0.255, 0.213, 0.186, 0.168, 0.156, 0.144, 0.136, 0.130},
      {0.421, 0.255, 0.194, 0.162, 0.142, 0.131, 0.119, 0.111, 0.105, 0.100},
      {0.349, 0.213, 0.162, 0.136, 0.119, 0.107, 0.100, 0.092, 0.088, 0.082},
      {0.303, 0.186, 0.142, 0.119, 0.105, 0.095, 0.088, 0.083, 0.077, 0.072},
      {0.273, 0.168, 0.131, 0.107, 0.095, 0.088, 0.079, 0.073, 0.071, 0.066},
      {0.250, 0.156, 0.119, 0.100, 0.088, 0.079, 0.073, 0.069, 0.066, 0.061},
      {0.232, 0.144, 0.111, 0.092, 0.083, 0.073, 0.069, 0.064, 0.060, 0.059},
      {0.219, 0.136, 0.105, 0.088, 0.077, 0.071, 0.066, 0.060, 0.057, 0.055},
      {0.208, 0.130, 0.100, 0.082, 0.072, 0.066, 0.061, 0.059, 0.055, 0.052}};
  if (p < 1 || p > 10 || q < 1 || q > 10) return std::nullopt;
  const double diff10 = alpha - 0.10, diff05 = alpha - 0.05, diff01 = alpha - 0.01;
  if (diff10 > -1e-12 && diff10 < 1e-12) return k10[p - 1][q - 1];
  if (diff05 > -1e-12 && diff05 < 1e-12) return k05[p - 1][q - 1];
  if (diff01 > -1e-12 && diff01 < 1e-12) return k01[p - 1][q - 1];
  return std::nullopt;
}

}  // namespace cordcov
