#pragma once

#include <string>
#include <vector>

#include "istab/forward.hpp"
#include "istab/grid.hpp"
#include "istab/potential.hpp"

namespace istab {

/// Evaluation of the directional boundary weighted-energy inequality
///
///   -(1/l) int_{bnd-} (a.nu) |d_nu u|^2 dS + C ||u||^2_{L2}
///     <= (1/l^2) ||e^{l phi}(lap + w^2 - q) e^{-l phi} u||^2_{L2}
///        + (1/l) int_{bnd+} (a.nu) |d_nu u|^2 dS,   phi(x) = a.x,
///
/// on a test field u vanishing on the boundary. Both boundary terms are
/// non-negative by the sign of a.nu on each set. For the sign-flipped weight
/// variant (evaluate_remark_form) the roles of bnd+ / bnd- swap and every
/// term carries the e^{-l phi} weight.
struct CarlemanReport {
  double lambda = 0.0;
  Vec3 alpha = Vec3::UnitX();
  double lhs_boundary = 0.0;  // weighted |d_nu u|^2 over the inflow part
  double lhs_volume = 0.0;    // C ||u||^2 with the supplied constant
  double rhs_volume = 0.0;    // (1/l^2) ||conjugated operator applied to u||^2
  double rhs_boundary = 0.0;  // weighted |d_nu u|^2 over the outflow part
  double slack = 0.0;         // rhs_total - lhs_total

  double lhs_total() const { return lhs_boundary + lhs_volume; }
  double rhs_total() const { return rhs_volume + rhs_boundary; }
};

/// Discrete conjugated operator e^{l phi}(lap + w^2 - q) e^{-l phi} expanded
/// as lap u - 2 l a.grad u + (l^2 + w^2 - q) u, with the 2n+1-point Laplacian
/// and centered gradient (zero Dirichlet values at boundary vertices).
/// Returns one value per interior node; agrees with the analytic expansion
/// within O(h^2) on smooth fields.
Eigen::VectorXd conjugated_operator(const DomainGrid& grid,
                                    const PotentialField& q, double omega,
                                    double lambda, const Vec3& alpha,
                                    const Eigen::VectorXd& u);

/// Second-order one-sided normal derivative at each face of a field that
/// vanishes on the boundary (interior values only).
Eigen::VectorXd normal_derivative_h01(const DomainGrid& grid,
                                      const Eigen::VectorXd& u);

/// Evaluates all four terms at the given lambda with volume constant c_const.
/// u holds interior-node values; the boundary value is identically zero.
CarlemanReport evaluate_carleman(const DomainGrid& grid,
                                 const PotentialField& q, double omega,
                                 double lambda, const Vec3& alpha,
                                 const Eigen::VectorXd& u,
                                 double c_const = 1.0);

/// Same inequality under the sign-flipped weight -phi, in the substituted
/// form: every boundary/volume integrand carries e^{-2 l phi}, the left
/// boundary term lives on {a.nu > 0} and the right one on {a.nu < 0} with
/// weight -(a.nu), and the volume operator acts unconjugated on u_tilde.
CarlemanReport evaluate_remark_form(const DomainGrid& grid,
                                    const PotentialField& q, double omega,
                                    double lambda, const Vec3& alpha,
                                    const Eigen::VectorXd& u_tilde,
                                    double c_const = 1.0);

struct CarlemanCalibration {
  double c_emp = 0.0;       // largest admissible volume constant
  double lambda0_emp = 0.0; // smallest grid lambda from which slack >= 0
  bool degenerate = false;  // family had no nonzero field
};

/// Scans lambda_grid (ascending) for the smallest lambda0 such that, with
/// C = min slack ratio over the family and all lambda >= lambda0, the
/// inequality holds with positive C. Throws ConvergenceError (naming the
/// worst offender) if no grid point works.
CarlemanCalibration calibrate_constants(const DomainGrid& grid,
                                        const PotentialField& q, double omega,
                                        const Vec3& alpha,
                                        const std::vector<Eigen::VectorXd>& family,
                                        const std::vector<double>& lambda_grid);

/// 16 logarithmically spaced values in [1, 1e3].
std::vector<double> default_lambda_grid();

/// Calibration family: tensor Gaussians at 5 seeded random centers/widths
/// plus the first 5 Dirichlet Laplacian eigenvectors, each normalized to
/// unit discrete L2 norm.
std::vector<Eigen::VectorXd> calibration_family(const DomainGrid& grid,
                                                std::uint64_t seed);

/// Randomized boundary-vanishing test field (mix of tensor Gaussian bumps
/// and Dirichlet sine products), for property sweeps.
Eigen::VectorXd random_test_field(const DomainGrid& grid, std::uint64_t seed);

struct CarlemanRecord {
  double omega = 0.0;
  double lambda = 0.0;
  int field_id = 0;
  CarlemanReport report;
};

/// CSV columns: omega, lambda, field_id, lhs_boundary, lhs_volume,
/// rhs_volume, rhs_boundary, slack (full %.17g precision).
void write_carleman_csv(const std::string& path,
                        const std::vector<CarlemanRecord>& records);

}  // namespace istab
