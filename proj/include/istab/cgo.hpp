#pragma once

#include <string>
#include <vector>

#include "istab/grid.hpp"
#include "istab/potential.hpp"
#include "istab/spectral.hpp"

namespace istab {

/// Complex frequency pair for the exponential solutions:
///   zeta1 =  xi/2 + i lambda alpha - s_mag beta,
///   zeta2 = -xi/2 - i lambda alpha - s_mag beta,
/// with s_mag = (omega^2 + lambda^2 - |xi|^2/4)^{1/2}, so that
/// zeta_j . zeta_j = omega^2 (bilinear) and |zeta_j| = (omega^2+2 lambda^2)^{1/2}.
struct ZetaPair {
  Vec3 xi = Vec3::Zero();
  Vec3 alpha = Vec3::UnitX();
  Vec3 beta = Vec3::UnitY();
  double lambda = 1.0;
  double omega = 2.0;
  double s_mag = 0.0;
  CVec3 zeta1 = CVec3::Zero();
  CVec3 zeta2 = CVec3::Zero();

  double magnitude() const;  // |zeta_j| = (omega^2 + 2 lambda^2)^{1/2}
};

/// Requires three dimensions, pairwise orthogonality of (xi, alpha, beta)
/// within 1e-10, unit alpha/beta, lambda >= 1, omega > 1, and a positive
/// radicand omega^2 + lambda^2 - |xi|^2/4.
ZetaPair make_zeta_pair(const Vec3& xi, const Vec3& alpha, const Vec3& beta,
                        double lambda, double omega);

/// Exponential solution u = e^{i x.zeta}(1 + r) with the remainder solved on
/// a periodic superset box via the Fourier-multiplier fixed point
///   r_{m+1} = G_zeta[-q (1 + r_m)],   G_zeta = 1 / (|k|^2 + 2 zeta.k).
/// The multiplier is sampled on the half-bin-shifted frequency lattice
/// k = (2 pi / side)(m + 1/2): the unshifted lattice hits the characteristic
/// point k = 0 (symbol exactly zero for every lambda), while the shifted
/// midpoint sampling keeps |symbol| >= 2 lambda pi / side for axis-aligned
/// alpha and is the standard quadrature for this singular multiplier.
struct CGOSolution {
  explicit CGOSolution(PeriodicBox b) : box(std::move(b)) {}

  CVec3 zeta = CVec3::Zero();
  double omega = 0.0;
  double lambda = 0.0;
  double radius = 1.0;  // enclosing radius R of the physical domain
  PeriodicBox box;
  PeriodicBox::Field r;     // remainder on the box lattice
  PeriodicBox::Field rhat;  // its shifted-mode DFT (for off-lattice eval)
  int iterations = 0;
  double residual = 0.0;     // relative residual of the conjugated equation
  int symbol_floor_hits = 0;
  bool lambda_perturbed = false;

  /// u at a box lattice point: e^{i x.zeta} (1 + r).
  Complex u_at(std::size_t idx) const;
  /// Remainder at an arbitrary point by exact trigonometric interpolation.
  Complex r_eval(const Vec3& x) const;
  /// u at an arbitrary point.
  Complex u_eval(const Vec3& x) const;
};

/// Solves the conjugated remainder equation for the given zeta. The box has
/// side 2R(1+margin) and its lattice step matches the domain grid where
/// possible. Throws ConvergenceError if the fixed point does not settle in
/// max_iter (|zeta| too small against ||q||) and AssumptionError if the
/// discrete symbol falls below 1e-8 |zeta|^2 on more than 0.1% of the modes
/// (resonant grid).
CGOSolution solve_remainder(const PotentialField& q, const CVec3& zeta, int s,
                            double tol = 1e-10, int max_iter = 200,
                            double margin = 0.5, int npts_min = 16);

/// solve_remainder on zeta1 (which = 1) or zeta2 (which = 2) of the pair,
/// retrying once with lambda perturbed by 1e-6 if the grid is resonant.
CGOSolution solve_cgo(const PotentialField& q, const ZetaPair& zp, int which,
                      int s, double tol = 1e-10, int max_iter = 200,
                      double margin = 0.5, int npts_min = 16);

/// ||r||_{H^s} computed in the shifted-mode basis (Parseval on the box).
double remainder_sobolev_norm(const CGOSolution& sol, double s);

struct RemainderBound {
  bool ok = false;
  double ratio = 0.0;  // ||r||_{H^s} |zeta| / ||q||_{H^s}
};

/// Executable form of the remainder estimate ||r||_{H^s} <= C1 ||q||_{H^s}/|zeta|.
RemainderBound verify_remainder_bound(const CGOSolution& sol,
                                      const PotentialField& q, double c1);

/// Discrete H^order(domain) norm of u (order 1 or 2), by centered finite
/// differences on the box lattice restricted to points inside the domain.
double cgo_sobolev_norm(const CGOSolution& sol, const DomainGrid& grid,
                        int order);

/// Frozen empirical constant for the growth bounds below (calibrated once on
/// the zero-potential exponential and held fixed).
inline constexpr double kCgoNormConstant = 4.0;

/// Growth bound C (omega^2 + 2 lambda^2)^{order/2} e^{lambda R}.
double cgo_norm_bound(const CGOSolution& sol, int order,
                      double c = kCgoNormConstant);

struct CgoCalibration {
  double c1 = 0.0;  // remainder-bound constant (1.5x worst observed ratio)
  double c2 = 0.0;  // convergence threshold |zeta| >= c2 ||q||_{H^s}
};

/// Runs the remainder solver over a seeded 10-potential suite and a geometric
/// ladder of |zeta| / ||q|| multipliers; c2 is the smallest multiplier at
/// which every suite member converges, c1 is 1.5x the worst ratio observed at
/// convergent multipliers.
CgoCalibration calibrate_cgo(const DomainGrid& grid, std::uint64_t seed,
                             int s = 3, int max_iter = 200);

/// Complex grid-field text export of the remainder (header: n, npts, side;
/// body: flat index, real, imag at full precision).
void write_cgo_field(const std::string& path, const CGOSolution& sol);

}  // namespace istab
