#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "istab/dnmap.hpp"
#include "istab/grid.hpp"
#include "istab/potential.hpp"
#include "istab/spectral.hpp"

namespace istab {

/// Parameter schedule tying the regularization strength lambda, the frequency
/// window rho and the smallness threshold delta to the data discrepancy:
///   K = n/th + 4n(1-th)/th + 5R + (n+2)/th,   L = (3n - 2n th + 2)/th,
///   lambda_tilde = max(1, lambda0, C2M) (1+margin),
///   delta = exp(-exp(K lambda_tilde^{1/L}))  (carried as log_delta: delta
///   itself underflows double for any realistic K),
///   rho = (1/K) ln(ln omega + |ln gap|),  lambda = rho^{(n+2)/th}
///   e^{2n rho (1-th)/th},  s = n/2 + 2 eta,  p = (1+s-eta)/(1+s).
struct ScheduleParams {
  int n = 3;
  double s = 3.0;
  double theta = 0.5;
  double r = 1.0;  // enclosing radius R
  double m = 10.0;
  double lambda0 = 1.0;  // empirical threshold of the weighted inequality
  double c2m = 0.0;      // C2 * M from the exponential-solution calibration

  double eta = 0.0;
  double p = 0.0;
  double lambda_tilde = 0.0;
  double k = 0.0;
  double l = 0.0;
  double log_delta = 0.0;  // ln(delta), always finite
  double delta = 0.0;      // exp(log_delta), usually underflows to 0

  double omega = 0.0;
  double dn_gap = 0.0;
  double log_gap = 0.0;  // effective ln(dn_gap) driving the chain
  bool gap_capped = false;
  bool small_gap = false;

  // Populated only in the small-gap regime.
  double rho = 0.0;
  double lambda = 0.0;
};

/// Builds and verifies the schedule. The small-gap branch (dn_gap < delta)
/// checks the full invariant chain (rho >= lambda_tilde^{1/L},
/// lambda >= rho^L >= lambda_tilde > lambda0, rho <= lambda,
/// sqrt(omega^2+2 lambda^2) > C2M) and throws AssumptionError naming the
/// first failing link. `log_gap_override` feeds synthetic sub-delta gaps
/// that are not representable as doubles; a zero gap without override is
/// placed just inside the small-gap region and flagged as capped.
ScheduleParams schedule_params(double omega, double dn_gap, int n, double s,
                               double theta, double r, double m,
                               double lambda0, double c2m, double margin = 0.1,
                               std::optional<double> log_gap_override = {});

struct Hm1Split {
  double low = 0.0;    // sum_{|k| <  rho} |qhat|^2/(1+|k|^2), Parseval-scaled
  double high = 0.0;   // complementary tail, <= ||q||_{L2}^2 / rho^2
  double total = 0.0;  // low + high = ||q||_{H^-1}^2
};

/// Frequency split of the squared H^{-1} norm at |xi| = rho.
Hm1Split hminus1_split(const PeriodicBox& box,
                       const PeriodicBox::Field& qdiff_hat, double rho);

/// Interpolation bound ||q||_inf <= c ||q||_{H^-1}^{eta/(1+s)} * hs_bound^p
/// with eta = (s - n/2)/2 and p = (1+s-eta)/(1+s); `hs_bound` is the H^s
/// bound (or measured norm) of the same function.
double interpolate_linfty(double hminus1, double s, double hs_bound, int n,
                          double c = 1.0);

/// Large-discrepancy fallback 2 c M (dn_gap/delta)^{theta/2}; requires
/// dn_gap >= delta. Prefer the log form for schedule-sized deltas.
double large_gap_bound(double delta, double m, double theta, double dn_gap,
                       double c = 1.0);
double log_large_gap_bound(double log_delta, double m, double theta,
                           double log_gap, double log_c = 0.0);

/// Small-gap stability bound
///   c [ omega^7 dn_gap + 1/rho^{2/theta} ]^{theta eta / (2(1+s))},
/// rho = (1/K) ln(ln omega + |ln dn_gap|). A zero gap is evaluated at the
/// |ln| cap and flagged through `capped`.
double stability_rhs(double omega, double dn_gap, const ScheduleParams& sp,
                     double c = 1.0, double ln_cap = 700.0,
                     bool* capped = nullptr);

struct StabilityRecord {
  std::string pair_name;
  double omega = 0.0;
  double dn_gap = 0.0;
  double hminus1 = 0.0;  // ||q1-q2||_{H^-1} on the enclosing box
  double linfty = 0.0;   // max |q1-q2| over the domain lattice
  ScheduleParams schedule;
  bool large_gap = true;
  double log_rhs_stab = 0.0;  // ln of the regime bound, log_c applied
  double rhs_stab = 0.0;      // exp(log_rhs_stab); may overflow to +inf
  bool ok = true;
  std::string error;
};

struct StabilityOptions {
  double s = 3.0;
  double theta = 0.5;
  double m = 10.0;
  double lambda0 = 1.0;
  double c2m = 0.0;
  double margin = 0.1;
  double log_c = 0.0;  // global constant of the bounds, in log space
  double ln_cap = 700.0;
  int jobs = 1;
  /// Optional DN factory (e.g. a disk cache); defaults to a direct build on
  /// the sweep grid. The sweep still memoizes per (potential, omega).
  std::function<DNOperator(const PotentialField&, double)> dn_provider;
};

struct SweepResult {
  std::vector<StabilityRecord> records;  // ordered by (omega, pair)
  /// Per-omega regression exponent beta in hminus1 ~ A * dn_gap^beta;
  /// increasing stability appears as beta rising toward 1 with omega.
  std::vector<std::pair<double, double>> beta;
};

/// Frequency sweep: for each omega and pair, builds both DN operators
/// (cached by (potential, omega) within the sweep), computes the gap, norms,
/// schedule and regime bound. Per-point failures are recorded and the sweep
/// continues.
SweepResult run_sweep(
    const DomainGrid& grid,
    const std::vector<std::pair<PotentialField, PotentialField>>& pairs,
    const std::vector<double>& omegas, const Vec3& alpha, double epsilon,
    const StabilityOptions& opts);

/// Global constant calibration: log_c = max over usable records of
/// ln(linfty) - log_rhs_stab, taken on records produced with log_c = 0.
double calibrate_stability_constant(const std::vector<StabilityRecord>& train);

// CSV / SVG emission (deterministic, full double precision in CSVs).
void write_stability_csv(const std::string& path,
                         const std::vector<StabilityRecord>& records);
void write_beta_csv(const std::string& path,
                    const std::vector<std::pair<double, double>>& beta);
/// Log-log scatter of hminus1 vs dn_gap, one series per omega.
void write_sweep_svg(const std::string& path,
                     const std::vector<StabilityRecord>& records);

}  // namespace istab
