#pragma once

#include <functional>
#include <string>
#include <vector>

#include "istab/cgo.hpp"
#include "istab/dnmap.hpp"
#include "istab/forward.hpp"

namespace istab {

/// Estimate of one Fourier mode of the potential difference, obtained from
/// the measured part of the boundary pairing, together with the two bound
/// components controlling |value - truth|:
///   bound_data_term  = C (omega^2+2 lambda^2)^{3/2} e^{2 lambda R} ||dLambda||
///   bound_lambda_term = C / sqrt(lambda).
struct FourierModeEstimate {
  Vec3 xi = Vec3::Zero();
  Complex value{0.0, 0.0};
  double bound_data_term = 0.0;
  double bound_lambda_term = 0.0;
  std::pair<const CGOSolution*, const CGOSolution*> cgo_ids{nullptr, nullptr};
};

/// Difference of two compatible DN operators (same grid, omega, restriction).
DNOperator dn_difference(const DNOperator& a, const DNOperator& b);

/// Checks the boundary pairing identity
///   int_Omega (q1-q2) u2 conj(v) dx = int_bnd d_nu(u1-u2) conj(v) dS
/// with v, u2 the exponential solutions for (q1, zeta1), (q2, zeta2) and u1
/// the interior solve with q1 and the trace of u2 as data. Returns the
/// relative defect |volume - boundary| / max(|volume|, |boundary|, 1e-30);
/// the two sides are reported through the optional out-pointers.
double green_identity_residual(const DomainGrid& grid,
                               const PotentialField& q1,
                               const PotentialField& q2, double omega,
                               const ZetaPair& zp, Complex* volume_out = nullptr,
                               Complex* boundary_out = nullptr);

/// Shared empirical constant of the estimate chain (one symbol for the
/// boundary-term, plus-part and total bounds), default before calibration.
inline constexpr double kEstimateConstantDefault = 1.0;

/// Estimates (q1-q2)^(xi) from measured data only: the inflow boundary term
/// with the DN difference applied to the trace of u2, paired against conj(v).
/// The outflow term is not measured; it is bounded (with the 1/sqrt(lambda)
/// weighted-energy bound) and returned in the bound fields. Requires
/// |xi| <= lambda and xi orthogonal to the partition direction.
FourierModeEstimate estimate_fourier_mode(
    const Vec3& xi, double lambda, double omega, const DNOperator& dn_diff,
    const CGOSolution& cgo1, const CGOSolution& cgo2,
    const BoundaryPartition& part, double dn_gap_value,
    double c = kEstimateConstantDefault);

struct BoundaryTermCheck {
  double minus_term = 0.0;   // |int_{minus_eps} d_nu(u1-u2) conj(v) dS|
  double est99_bound = 0.0;  // C (omega^2+2 lambda^2)^{3/2} e^{2 lambda R} gap
};

/// Evaluates the measured inflow term and its operator-norm bound.
BoundaryTermCheck boundary_term_check(const DomainGrid& grid,
                                      const CGOSolution& cgo1,
                                      const BoundaryPartition& part,
                                      const DNOperator& dn_diff,
                                      const Eigen::VectorXcd& u2_trace,
                                      double dn_gap_value,
                                      double c = kEstimateConstantDefault);

struct WeightedTraceCheck {
  double lhs = 0.0;  // ||e^{-l phi} d_nu(u1-u2)||_{L2(plus_eps)}
  double rhs = 0.0;  // (1/sqrt(eps))[ (1/sqrt(l)) ||e^{-l phi}(q1-q2) u2|| +
                     //   sqrt(-inf_{minus}(a.nu)) ||e^{-l phi} d_nu(u1-u2)||_{minus_eps} ]
};

/// Weighted-energy control of the unmeasured outflow flux by the volume
/// source and the measured inflow flux.
WeightedTraceCheck weighted_outflow_check(const DomainGrid& grid,
                                          const PotentialField& q1,
                                          const PotentialField& q2,
                                          const CGOSolution& cgo2,
                                          const DNOperator& dn_diff,
                                          const BoundaryPartition& part,
                                          double lambda);

/// Calibrates the shared constant C: largest ratio of |value - truth| to the
/// unit-constant bound over the given potential pairs and modes (truth by
/// direct quadrature of (q1-q2) e^{-i xi.x}). For nonzero modes the second
/// frequency direction is derived as alpha x xi; `beta` is used at xi = 0.
double calibrate_estimate_constant(
    const DomainGrid& grid, double omega, double lambda, const Vec3& alpha,
    const Vec3& beta,
    const std::vector<std::pair<PotentialField, PotentialField>>& pairs,
    const std::vector<Vec3>& xis, const BoundaryPartition& part,
    const BoundaryNormCalculus& calc);

/// Direct trapezoid quadrature of int (q1-q2) e^{-i xi.x} dx over the domain
/// lattice (truth oracle for synthetic pairs).
Complex fourier_truth(const DomainGrid& grid, const PotentialField& q1,
                      const PotentialField& q2, const Vec3& xi);

struct ContinuationResult {
  double theta_emp = 0.0;   // empirical Hoelder exponent of the extension
  double max_ball = 0.0;    // max |fit| on the ball B(0, rho)
  double sup_cone = 0.0;    // max |samples| on the cone patch
  double fit_residual = 0.0;  // relative LS residual on the cone samples
  double extension_error = 0.0;  // max |fit - f| on B(0, rho)
};

/// Analytic-continuation probe: least-squares polynomial fit of f on the
/// cone patch {angle(x, axis) <= half_angle} within B(0, rho), extended to
/// the whole ball. theta_emp is the regression slope of ln max_B |fit|
/// against (ln sup_cone |f| - n rho) over argument-scaled copies of f.
/// Throws InvalidArgument when the sample count is below 4x the coefficient
/// count or the fit is rank-deficient.
ContinuationResult vessella_continuation_test(
    const std::function<Complex(const Vec3&)>& fhat, const Vec3& axis,
    double half_angle_deg, double rho, int degree);

/// CSV columns: xi_x, xi_y, xi_z, re, im, bound_data, bound_lambda.
void write_mode_csv(const std::string& path,
                    const std::vector<FourierModeEstimate>& modes);

}  // namespace istab
