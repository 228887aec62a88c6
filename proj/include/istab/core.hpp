#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace istab {

using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using Complex = std::complex<double>;

/// Raised when a caller violates an operation precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the spectral admissibility assumptions fail (near-resonant
/// frequency, singular system) or a solver detects them indirectly.
class AssumptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an iterative scheme fails to converge within its budget.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a over raw bytes; used for cache keys and potential ids.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t hash_doubles(const double* v, std::size_t count,
                                  std::uint64_t seed = 1469598103934665603ull) {
  return fnv1a(v, count * sizeof(double), seed);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope*x + intercept.
inline LinearFit fit_line(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidArgument("fit_line: need >= 2 matching samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw InvalidArgument("fit_line: degenerate abscissae");
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  const double sstot = syy - sy * sy / n;
  double ssres = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ssres += e * e;
  }
  f.r2 = sstot > 0 ? 1.0 - ssres / sstot : 1.0;
  return f;
}

}  // namespace istab
