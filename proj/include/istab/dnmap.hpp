#pragma once

#include <map>
#include <optional>
#include <string>

#include "istab/forward.hpp"
#include "istab/grid.hpp"
#include "istab/potential.hpp"

namespace istab {

/// Discrete Dirichlet-to-Neumann operator on the boundary-face basis.
///
/// `matrix` holds flux responses: column j is the flux trace of the solution
/// with the j-th face-indicator Dirichlet datum, so `matrix * f` is the
/// Neumann trace of the solution with boundary data f (exact on affine
/// fields). Discrete self-adjointness lives in the weighted boundary pairing:
/// `pairing()` = diag(ds * face_weight) * matrix is symmetric to solver
/// roundoff for real q. A plain-matrix-symmetric representation that is also
/// pointwise consistent at box-edge faces does not exist on this lattice, so
/// both views are exposed.
struct DNOperator {
  const DomainGrid* grid = nullptr;
  std::uint64_t q_id = 0;
  double omega = 0.0;
  Eigen::MatrixXcd matrix;      // faces x faces
  Eigen::VectorXd face_weight;  // pairing weights (1 away from box edges)
  std::optional<BoundaryPartition> restriction;  // rows kept = minus_eps
  double src_order = 1.5;
  double tgt_order = 0.5;

  int size() const { return static_cast<int>(matrix.rows()); }
  Eigen::MatrixXcd pairing() const;
  /// ||P - P^T|| / ||P|| of the pairing matrix (discrete reciprocity defect).
  double symmetry_defect() const;
  /// Flux trace for boundary data f, honoring the restriction if set.
  Eigen::VectorXcd apply(const Eigen::VectorXcd& f) const;
};

/// Assembles the DN operator; one factorization shared by all columns.
/// `jobs` <= 0 uses the hardware concurrency.
DNOperator build_dn(const DomainGrid& grid, const PotentialField& q,
                    double omega, bool check_assumptions = true, int jobs = 1);

/// Restriction to the measured boundary part: rows outside part.minus_eps are
/// zeroed and the partition is recorded. Idempotent for a fixed partition.
DNOperator restrict_partial(const DNOperator& dn, const BoundaryPartition& p);

/// Discrete fractional Sobolev calculus on the boundary: graph Laplacian over
/// faces (edge-sharing adjacency, 1/h^2 scaling) with cached eigendecomposed
/// fractional powers of (I + L).
class BoundaryNormCalculus {
 public:
  explicit BoundaryNormCalculus(const DomainGrid& grid);

  const DomainGrid& grid() const { return *grid_; }
  const Eigen::MatrixXd& laplacian() const { return lap_; }
  const Eigen::VectorXd& eigenvalues() const { return evals_; }
  /// (I + L)^t for any real t.
  const Eigen::MatrixXd& fractional_power(double t) const;
  /// ||(I+L)^{1/2} (I+L)^{1/2} - (I+L)|| (spectral-decomposition sanity).
  double reconstruction_error() const;

  /// ||P (I+L)^{1/4} A (I+L)^{-3/4}||_2 by power iteration on the normal
  /// operator (relative tolerance 1e-6, at most 1e4 steps). P keeps the rows
  /// where row_mask is nonzero (empty mask = no restriction) and acts after
  /// the smoothing power so restriction is exactly norm-non-increasing.
  double operator_norm_fractional(const Eigen::MatrixXcd& a,
                                  const std::vector<char>& row_mask) const;

 private:
  const DomainGrid* grid_ = nullptr;
  Eigen::MatrixXd lap_;
  Eigen::VectorXd evals_;
  Eigen::MatrixXd evecs_;
  mutable std::map<double, Eigen::MatrixXd> powers_;
};

/// H^{3/2} -> H^{1/2}(minus_eps) operator norm of the difference of two
/// (compatible) DN operators under the given partition.
double dn_gap(const DNOperator& a, const DNOperator& b,
              const BoundaryPartition& part, const BoundaryNormCalculus& calc);

// Versioned binary record (with checksum) and CSV export.
void save_dn_operator(const std::string& path, const DNOperator& dn);
DNOperator load_dn_operator(const std::string& path, const DomainGrid& grid);
void write_dn_csv(const std::string& path, const DNOperator& dn);

}  // namespace istab
