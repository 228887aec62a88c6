#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <memory>
#include <optional>

#include "istab/core.hpp"
#include "istab/grid.hpp"
#include "istab/potential.hpp"

namespace istab {

using SparseMat = Eigen::SparseMatrix<double>;

/// Spectral admissibility report for a frequency: (A) zero is not a Dirichlet
/// eigenvalue of -lap+q, (B) omega^2 keeps distance c*omega^{2-n} from the
/// spectrum.
struct FrequencyCheck {
  double omega = 0.0;
  Eigen::VectorXd eigenvalues;  // lowest k Dirichlet eigenvalues of -lap+q
  double dist_to_spectrum = 0.0;
  double c_small = 1e-3;
  bool passes_A = false;
  bool passes_B = false;
  bool passes() const { return passes_A && passes_B; }
};

/// Discrete L_q = -lap - omega^2 + q with Dirichlet data entering through
/// the right-hand side. `face_to_rhs` maps per-face boundary data to the
/// forcing felt by interior nodes (boundary vertices take the mean of their
/// adjacent face values).
struct DirichletSystem {
  const DomainGrid* grid = nullptr;
  double omega = 0.0;
  SparseMat A;            // interior x interior, symmetric for real q
  SparseMat face_to_rhs;  // interior x faces
  Eigen::VectorXd q_at_faces;
  Eigen::VectorXd q_values;

  /// Boundary vertex referenced by an interior stencil: its unique inward
  /// interior neighbor and its face-averaging weights.
  struct BoundaryCoupling {
    int inward = -1;
    std::vector<std::pair<int, double>> faces;
  };
  std::vector<BoundaryCoupling> couplings;
  /// Per-face sum of averaging weights from coupled vertices (1 away from
  /// box edges, smaller on the edge/corner rings).
  Eigen::VectorXd face_weight;
};

DirichletSystem assemble_operator(const DomainGrid& grid,
                                  const PotentialField& q, double omega);

FrequencyCheck dirichlet_spectrum_check(const DomainGrid& grid,
                                        const PotentialField& q, double omega,
                                        int k = 24, double c_small = 1e-3);

/// Factorized solver; immutable after construction, safe for concurrent
/// solves on distinct right-hand sides.
class DirichletSolver {
 public:
  DirichletSolver(const DomainGrid& grid, const PotentialField& q,
                  double omega, bool check_conditioning = true);

  const DirichletSystem& system() const { return sys_; }
  const DomainGrid& grid() const { return *sys_.grid; }
  double omega() const { return sys_.omega; }
  double condition_estimate() const { return cond_estimate_; }

  /// Solves L_q u = 0 in the interior with u = f on the boundary faces.
  Eigen::VectorXcd solve(const Eigen::VectorXcd& f) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& f) const;

  /// Relative residual ||A u - rhs|| / max(||u||, eps) of a computed solution.
  double residual(const Eigen::VectorXcd& u, const Eigen::VectorXcd& f) const;

 private:
  DirichletSystem sys_;
  Eigen::SparseLU<SparseMat> lu_;
  double cond_estimate_ = 0.0;
};

/// Convenience wrapper: spectrum-checks, then solves.
Eigen::VectorXcd solve_dirichlet(const DomainGrid& grid,
                                 const PotentialField& q, double omega,
                                 const Eigen::VectorXcd& f,
                                 double c_small = 1e-3);

/// Value of the discrete solution at a lattice vertex: the interior unknown,
/// or the face-averaged Dirichlet data on the boundary.
Complex value_at_vertex(const DomainGrid& grid, const Eigen::Vector3i& coords,
                        const Eigen::VectorXcd& u, const Eigen::VectorXcd& f);

/// Second-order one-sided normal derivative at each boundary face center.
Eigen::VectorXcd neumann_trace(const DomainGrid& grid,
                               const Eigen::VectorXcd& u,
                               const Eigen::VectorXcd& f);

/// Adjoint-consistent first-order flux trace with the PDE-consistent diagonal
/// correction. Built from the same averaging operator as the system
/// right-hand side, so the pairing sum_f ds_f * face_weight_f * flux(u_f)_f *
/// g_f is exactly symmetric in (f, g) and the assembled DN pairing matrix is
/// symmetric to solver roundoff. Exact on affine fields at every face.
Eigen::VectorXcd dn_flux_trace(const DirichletSystem& sys,
                               const Eigen::VectorXcd& u,
                               const Eigen::VectorXcd& f);

/// Mean-of-adjacent-faces weights of a boundary vertex (row of the coupling
/// operator); empty if the vertex is not on the boundary.
std::vector<std::pair<int, double>> boundary_vertex_weights(
    const DomainGrid& grid, const Eigen::Vector3i& coords);

// Eigenvalue utilities (Lanczos shift-invert on the symmetric operator).
Eigen::VectorXd lowest_eigenvalues(const SparseMat& A, int k);
double nearest_eigenvalue_distance(const SparseMat& A, double target);

}  // namespace istab
