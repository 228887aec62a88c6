#pragma once

#include <functional>
#include <string>

#include "istab/core.hpp"
#include "istab/grid.hpp"

namespace istab {

/// Real potential sampled on the interior nodes of a grid, with the analytic
/// evaluator kept alongside so the field can be resampled on other lattices
/// (zero-extended outside the domain).
struct PotentialField {
  const DomainGrid* grid = nullptr;
  Eigen::VectorXd values;  // one entry per interior node
  int s = 3;               // Sobolev smoothness order, s >= [n/2]+1
  double M = 10.0;         // admissibility bound
  std::function<double(const Vec3&)> eval_fn;  // defined on all of R^n
  std::string name = "q";

  double eval(const Vec3& x) const { return eval_fn ? eval_fn(x) : 0.0; }
  std::uint64_t hash() const;
};

bool point_inside(const GridSpec& spec, const Vec3& x);

/// Samples an analytic potential on the grid (zero outside the domain).
PotentialField make_potential(const DomainGrid& grid,
                              std::function<double(const Vec3&)> f,
                              std::string name, int s, double M);

// Built-in analytic families.
std::function<double(const Vec3&)> gaussian_bump(const Vec3& center,
                                                 double width, double amp);
/// Cosine mode amp*cos(xi . x + phase) under a smooth window vanishing at the
/// box boundary, so the zero extension stays smooth.
std::function<double(const Vec3&)> windowed_cosine(const GridSpec& spec,
                                                   const Vec3& xi, double amp,
                                                   double phase = 0.0);
std::function<double(const Vec3&)> constant_potential(double c);

/// Sum of two potentials.
std::function<double(const Vec3&)> add(std::function<double(const Vec3&)> a,
                                       std::function<double(const Vec3&)> b);

/// Plain-text grid-field file. Header lines: format tag/version, n, shape,
/// h, center, half_widths (or radius), count, columns (1 real / 2 complex);
/// body: one node per line, "index value" or "index re im", full precision.
void write_grid_field(const std::string& path, const GridSpec& spec,
                      const Eigen::VectorXd& values);
void write_grid_field(const std::string& path, const GridSpec& spec,
                      const Eigen::VectorXcd& values);
/// Loads the body as complex values (imag = 0 for 1-column files); the
/// parsed header is returned through spec_out when given.
Eigen::VectorXcd load_grid_field(const std::string& path,
                                 GridSpec* spec_out = nullptr);
/// Loads a real grid-field file as a potential on `grid` (the header must
/// match the grid spec and the count its interior nodes). The evaluator is
/// the nearest-vertex lookup, zero outside the domain.
PotentialField load_potential_field(const std::string& path,
                                    const DomainGrid& grid, int s = 3,
                                    double M = 10.0);

}  // namespace istab
