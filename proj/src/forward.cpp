#include "istab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace istab {

namespace {

bool on_boundary_plane(const DomainGrid& g, const Eigen::Vector3i& c, int axis) {
  return c[axis] == 0 || c[axis] == g.dims[axis] - 1;
}

Eigen::VectorXd random_unit_vector(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = u(rng);
  return v.normalized();
}

}  // namespace

namespace {

// All boundary faces of `grid` on the plane through `p` with normal along
// `axis`, at tangential offsets off*h/2 from p (off over {-1,+1}^{n-1}), with
// the boundary coordinate of the other boundary plane (if any) shifted to
// `shift_half*h/2`.
std::vector<int> adjacent_plane_faces(const DomainGrid& grid, const Vec3& p,
                                      int axis, int other_axis,
                                      int shift_half) {
  std::vector<int> out;
  const double hh = grid.h / 2.0;
  int t1 = -1, t2 = -1;
  for (int d = 0; d < grid.n; ++d) {
    if (d == axis) continue;
    (t1 < 0 ? t1 : t2) = d;
  }
  const int combos = (grid.n == 3) ? 4 : 2;
  for (int c = 0; c < combos; ++c) {
    Vec3 q = p;
    q[t1] += ((c & 1) ? 1 : -1) * hh;
    if (grid.n == 3) q[t2] += ((c & 2) ? 1 : -1) * hh;
    if (other_axis >= 0) q[other_axis] = p[other_axis] + shift_half * hh;
    const int f = grid.find_face(q);
    if (f >= 0 && grid.faces[f].axis == axis) out.push_back(f);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::vector<std::pair<int, double>> boundary_vertex_weights(
    const DomainGrid& grid, const Eigen::Vector3i& coords) {
  std::vector<std::pair<int, double>> out;
  if (!grid.vertex_in_lattice(coords)) return out;
  const Vec3 p = grid.vertex_pos(coords);
  const double hh = grid.h / 2.0;

  if (grid.spec.shape != Shape::Box) {
    // Staircase boundary: uniform mean over every touching face.
    for (int axis = 0; axis < grid.n; ++axis)
      for (int sgn = -1; sgn <= 1; sgn += 2) {
        Vec3 base = p;
        base[axis] += sgn * hh;
        for (int f : adjacent_plane_faces(grid, base, axis, -1, 0))
          out.emplace_back(f, 1.0);
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (!out.empty())
      for (auto& e : out) e.second = 1.0 / static_cast<double>(out.size());
    return out;
  }

  std::vector<int> planes;
  for (int axis = 0; axis < grid.n; ++axis)
    if (on_boundary_plane(grid, coords, axis)) planes.push_back(axis);
  if (planes.empty()) return out;

  if (planes.size() == 1) {
    // Face-interior vertex: mean of its 2^{n-1} surrounding faces.
    const auto faces = adjacent_plane_faces(grid, p, planes[0], -1, 0);
    const double w = 1.0 / static_cast<double>(faces.size());
    for (int f : faces) out.emplace_back(f, w);
    return out;
  }

  if (planes.size() == 2) {
    // Box-edge vertex: no centered face stencil exists, so extrapolate
    // linearly from two rings of faces (3/2 * ring1 - 1/2 * ring2), which is
    // exact on affine fields.
    std::vector<int> ring1, ring2;
    for (int pi = 0; pi < 2; ++pi) {
      const int axis = planes[pi];
      const int other = planes[1 - pi];
      const int dir = (coords[other] == 0) ? +1 : -1;  // inward along `other`
      for (int f : adjacent_plane_faces(grid, p, axis, other, dir))
        ring1.push_back(f);
      for (int f : adjacent_plane_faces(grid, p, axis, other, 3 * dir))
        ring2.push_back(f);
    }
    if (!ring2.empty() && ring2.size() == ring1.size()) {
      const double w1 = 1.5 / static_cast<double>(ring1.size());
      const double w2 = -0.5 / static_cast<double>(ring2.size());
      for (int f : ring1) out.emplace_back(f, w1);
      for (int f : ring2) out.emplace_back(f, w2);
    } else if (!ring1.empty()) {
      const double w = 1.0 / static_cast<double>(ring1.size());
      for (int f : ring1) out.emplace_back(f, w);
    }
    return out;
  }

  throw InvalidArgument(
      "boundary_vertex_weights: corner vertices carry no face value");
}

DirichletSystem assemble_operator(const DomainGrid& grid,
                                  const PotentialField& q, double omega) {
  if (q.grid != &grid)
    throw InvalidArgument("assemble_operator: potential lives on another grid");
  if (omega < 0.0) throw InvalidArgument("assemble_operator: omega must be >= 0");
  if (grid.spec.shape != Shape::Box)
    throw InvalidArgument(
        "assemble_operator: interior solves support box domains only");

  const int m = grid.num_interior();
  const double h2 = grid.h * grid.h;
  DirichletSystem sys;
  sys.grid = &grid;
  sys.omega = omega;
  sys.q_values = q.values;

  std::vector<Eigen::Triplet<double>> ta, tb;
  ta.reserve(static_cast<std::size_t>(m) * (2 * grid.n + 1));
  for (int i = 0; i < m; ++i) {
    const auto c = grid.interior_coords[i];
    ta.emplace_back(i, i, 2.0 * grid.n / h2 + q.values[i] - omega * omega);
    for (int axis = 0; axis < grid.n; ++axis)
      for (int sgn = -1; sgn <= 1; sgn += 2) {
        Eigen::Vector3i nb = c;
        nb[axis] += sgn;
        const int j = grid.interior_at(nb);
        if (j >= 0) {
          ta.emplace_back(i, j, -1.0 / h2);
        } else {
          DirichletSystem::BoundaryCoupling bc;
          bc.inward = i;
          bc.faces = boundary_vertex_weights(grid, nb);
          for (const auto& [face, w] : bc.faces)
            tb.emplace_back(i, face, w / h2);
          sys.couplings.push_back(std::move(bc));
        }
      }
  }
  sys.A.resize(m, m);
  sys.A.setFromTriplets(ta.begin(), ta.end());
  sys.face_to_rhs.resize(m, grid.num_faces());
  sys.face_to_rhs.setFromTriplets(tb.begin(), tb.end());

  sys.q_at_faces.resize(grid.num_faces());
  for (int f = 0; f < grid.num_faces(); ++f)
    sys.q_at_faces[f] = q.eval_fn ? q.eval_fn(grid.faces[f].center) : 0.0;

  sys.face_weight = Eigen::VectorXd::Zero(grid.num_faces());
  for (const auto& bc : sys.couplings)
    for (const auto& [face, w] : bc.faces) sys.face_weight[face] += w;
  for (int f = 0; f < grid.num_faces(); ++f)
    if (sys.face_weight[f] <= 0.0)
      throw std::logic_error("assemble_operator: uncoupled boundary face");
  return sys;
}

Eigen::VectorXd lowest_eigenvalues(const SparseMat& A, int k) {
  const int dim = static_cast<int>(A.rows());
  k = std::min(k, dim);
  if (dim <= 400) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(A)};
    return es.eigenvalues().head(k);
  }
  // Shift below the spectrum (Gershgorin keeps A - sigma I positive definite).
  double sigma = 0.0;
  for (int i = 0; i < dim; ++i) {
    double row = A.coeff(i, i);
    for (SparseMat::InnerIterator it(A, i); it; ++it)
      if (it.row() != i) row -= std::abs(it.value());
    sigma = std::min(sigma, row);
  }
  sigma -= 1.0;

  SparseMat As = A;
  for (int i = 0; i < dim; ++i) As.coeffRef(i, i) -= sigma;
  Eigen::SparseLU<SparseMat> lu;
  lu.compute(As);
  if (lu.info() != Eigen::Success)
    throw ConvergenceError("lowest_eigenvalues: factorization failed");

  const int miter = std::min(dim, std::max(2 * k + 40, 80));
  Eigen::MatrixXd V(dim, miter + 1);
  Eigen::VectorXd alpha(miter), beta(miter);
  V.col(0) = random_unit_vector(dim, 0x5eedULL);
  Eigen::VectorXd w;
  int steps = 0;
  for (int j = 0; j < miter; ++j) {
    w = lu.solve(V.col(j));
    alpha[j] = V.col(j).dot(w);
    w -= alpha[j] * V.col(j);
    if (j > 0) w -= beta[j - 1] * V.col(j - 1);
    // Full reorthogonalization.
    for (int r = 0; r <= j; ++r) w -= V.col(r).dot(w) * V.col(r);
    beta[j] = w.norm();
    steps = j + 1;
    if (beta[j] < 1e-12) break;
    V.col(j + 1) = w / beta[j];
  }
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
  for (int j = 0; j < steps; ++j) {
    T(j, j) = alpha[j];
    if (j + 1 < steps) T(j, j + 1) = T(j + 1, j) = beta[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  // Largest theta of (A - sigma)^-1 correspond to the lowest eigenvalues.
  std::vector<double> lam;
  for (int j = steps - 1; j >= 0 && static_cast<int>(lam.size()) < k; --j) {
    const double theta = es.eigenvalues()[j];
    if (theta <= 0) break;
    lam.push_back(sigma + 1.0 / theta);
  }
  std::sort(lam.begin(), lam.end());
  Eigen::VectorXd out(static_cast<int>(lam.size()));
  for (std::size_t i = 0; i < lam.size(); ++i) out[static_cast<int>(i)] = lam[i];
  return out;
}

double nearest_eigenvalue_distance(const SparseMat& A, double target) {
  const int dim = static_cast<int>(A.rows());
  SparseMat As = A;
  for (int i = 0; i < dim; ++i) As.coeffRef(i, i) -= target;
  Eigen::SparseLU<SparseMat> lu;
  lu.compute(As);
  if (lu.info() != Eigen::Success) return 0.0;  // exactly singular shift
  Eigen::VectorXd v = random_unit_vector(dim, 0xd157ULL);
  double mu = 0.0;
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd w = lu.solve(v);
    const double nw = w.norm();
    if (!std::isfinite(nw) || nw == 0.0) return 0.0;
    mu = nw;
    v = w / nw;
  }
  return 1.0 / mu;
}

FrequencyCheck dirichlet_spectrum_check(const DomainGrid& grid,
                                        const PotentialField& q, double omega,
                                        int k, double c_small) {
  if (k < 1) throw InvalidArgument("dirichlet_spectrum_check: k >= 1 required");
  FrequencyCheck fc;
  fc.omega = omega;
  fc.c_small = c_small;
  const auto sys = assemble_operator(grid, q, 0.0);
  fc.eigenvalues = lowest_eigenvalues(sys.A, k);

  const double scale = 2.0 * grid.n / (grid.h * grid.h);
  const double dist0 = nearest_eigenvalue_distance(sys.A, 0.0);
  fc.passes_A = dist0 > 1e-8 * scale;

  fc.dist_to_spectrum = nearest_eigenvalue_distance(sys.A, omega * omega);
  const double gate = c_small * std::pow(std::max(omega, 1.0), 2.0 - grid.n);
  fc.passes_B = fc.dist_to_spectrum > gate;
  return fc;
}

DirichletSolver::DirichletSolver(const DomainGrid& grid,
                                 const PotentialField& q, double omega,
                                 bool check_conditioning)
    : sys_(assemble_operator(grid, q, omega)) {
  lu_.compute(sys_.A);
  if (lu_.info() != Eigen::Success)
    throw AssumptionError("DirichletSolver: singular system (resonant omega?)");
  if (check_conditioning) {
    const int dim = static_cast<int>(sys_.A.rows());
    Eigen::VectorXd v = random_unit_vector(dim, 0xabcdULL);
    double smax = 0.0;
    for (int it = 0; it < 25; ++it) {
      Eigen::VectorXd w = sys_.A * v;
      smax = w.norm();
      v = w / smax;
    }
    v = random_unit_vector(dim, 0xbeefULL);
    double inv = 0.0;
    for (int it = 0; it < 25; ++it) {
      Eigen::VectorXd w = lu_.solve(v);
      inv = w.norm();
      v = w / inv;
    }
    cond_estimate_ = smax * inv;
    if (cond_estimate_ > 1e12)
      throw AssumptionError(
          "DirichletSolver: near-singular system, condition estimate " +
          std::to_string(cond_estimate_));
  }
}

Eigen::VectorXd DirichletSolver::solve(const Eigen::VectorXd& f) const {
  if (f.size() != sys_.face_to_rhs.cols())
    throw InvalidArgument("solve: boundary data size mismatch");
  return lu_.solve(Eigen::VectorXd(sys_.face_to_rhs * f));
}

Eigen::VectorXcd DirichletSolver::solve(const Eigen::VectorXcd& f) const {
  Eigen::VectorXd re = solve(Eigen::VectorXd(f.real()));
  Eigen::VectorXd im = solve(Eigen::VectorXd(f.imag()));
  return re + Complex(0, 1) * im;
}

double DirichletSolver::residual(const Eigen::VectorXcd& u,
                                 const Eigen::VectorXcd& f) const {
  const Eigen::VectorXcd rhs = sys_.face_to_rhs.cast<Complex>() * f;
  const Eigen::VectorXcd r = sys_.A.cast<Complex>() * u - rhs;
  return r.norm() / std::max(u.norm(), 1e-30);
}

Eigen::VectorXcd solve_dirichlet(const DomainGrid& grid,
                                 const PotentialField& q, double omega,
                                 const Eigen::VectorXcd& f, double c_small) {
  const auto fc = dirichlet_spectrum_check(grid, q, omega, 16, c_small);
  if (!fc.passes())
    throw AssumptionError(
        fc.passes_A ? "solve_dirichlet: omega^2 too close to the spectrum"
                    : "solve_dirichlet: 0 is a Dirichlet eigenvalue of -lap+q");
  DirichletSolver solver(grid, q, omega);
  Eigen::VectorXcd u = solver.solve(f);
  if (solver.residual(u, f) > 1e-10)
    throw ConvergenceError("solve_dirichlet: residual above tolerance");
  return u;
}

Complex value_at_vertex(const DomainGrid& grid, const Eigen::Vector3i& coords,
                        const Eigen::VectorXcd& u, const Eigen::VectorXcd& f) {
  const int id = grid.interior_at(coords);
  if (id >= 0) return u[id];
  const auto w = boundary_vertex_weights(grid, coords);
  if (w.empty())
    throw InvalidArgument("value_at_vertex: vertex outside the closed domain");
  Complex v = 0.0;
  for (const auto& [face, weight] : w) v += weight * f[face];
  return v;
}

namespace {

// Mean of the solution over the 2^{n-1} lattice vertices around the point
// face_center - layer*h*nu.
Complex layer_mean(const DomainGrid& grid, const BoundaryFace& face, int layer,
                   const Eigen::VectorXcd& u, const Eigen::VectorXcd& f) {
  Vec3 lc = (face.center - grid.origin) / grid.h;
  lc[face.axis] -= layer * face.sign;
  Eigen::Vector3i base;
  for (int d = 0; d < 3; ++d) base[d] = static_cast<int>(std::floor(lc[d] + 1e-9));
  Complex acc = 0.0;
  int count = 0;
  for (int dz = 0; dz <= (grid.n == 3 ? 1 : 0); ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        Eigen::Vector3i c = base + Eigen::Vector3i(dx, dy, dz);
        // Skip offsets along integer (non-staggered) axes.
        bool valid = true;
        const Eigen::Vector3i off(dx, dy, dz);
        for (int d = 0; d < 3; ++d) {
          const double frac = lc[d] - std::floor(lc[d] + 1e-9);
          if (frac < 1e-6 && off[d] == 1) valid = false;
        }
        if (!valid) continue;
        acc += value_at_vertex(grid, c, u, f);
        ++count;
      }
  return acc / static_cast<double>(count);
}

}  // namespace

Eigen::VectorXcd neumann_trace(const DomainGrid& grid,
                               const Eigen::VectorXcd& u,
                               const Eigen::VectorXcd& f) {
  if (f.size() != grid.num_faces() || u.size() != grid.num_interior())
    throw InvalidArgument("neumann_trace: shape mismatch");
  Eigen::VectorXcd out(grid.num_faces());
  for (int fi = 0; fi < grid.num_faces(); ++fi) {
    const auto& face = grid.faces[fi];
    const Complex u1 = layer_mean(grid, face, 1, u, f);
    const Complex u2 = layer_mean(grid, face, 2, u, f);
    Complex num = 3.0 * f[fi] - 4.0 * u1 + u2;
    // The layer means carry an O(h^2) tangential-curvature offset (vertex
    // corners vs. the face-center point value). Cancel it with a curvature
    // estimate from the in-plane neighbor faces where they all exist.
    if (grid.spec.shape == Shape::Box) {
      Complex lap_t = 0.0;
      int found = 0, wanted = 0;
      for (int t = 0; t < grid.n; ++t) {
        if (t == face.axis) continue;
        wanted += 2;
        for (int sgn = -1; sgn <= 1; sgn += 2) {
          Vec3 p = face.center;
          p[t] += sgn * grid.h;
          const int nb = grid.find_face(p);
          if (nb >= 0 && grid.faces[nb].axis == face.axis) {
            lap_t += f[nb] - f[fi];
            ++found;
          }
        }
      }
      if (found == wanted) num += 0.375 * lap_t;
    }
    out[fi] = num / (2.0 * grid.h);
  }
  return out;
}

Eigen::VectorXcd dn_flux_trace(const DirichletSystem& sys,
                               const Eigen::VectorXcd& u,
                               const Eigen::VectorXcd& f) {
  const DomainGrid& grid = *sys.grid;
  if (f.size() != grid.num_faces() || u.size() != grid.num_interior())
    throw InvalidArgument("dn_flux_trace: shape mismatch");
  // Per boundary vertex: one-sided difference between its face-averaged value
  // and its inward interior neighbor, redistributed onto the faces with the
  // same averaging weights. The redistribution makes the DN pairing matrix
  // exactly symmetric (the interior part collapses to B^T A^{-1} B).
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(grid.num_faces());
  for (const auto& bc : sys.couplings) {
    Complex bv = 0.0;
    for (const auto& [face, w] : bc.faces) bv += w * f[face];
    const Complex diff = bv - u[bc.inward];
    for (const auto& [face, w] : bc.faces) acc[face] += w * diff;
  }
  Eigen::VectorXcd out(grid.num_faces());
  for (int fi = 0; fi < grid.num_faces(); ++fi) {
    const double qf = sys.q_at_faces[fi] - sys.omega * sys.omega;
    out[fi] = acc[fi] / (grid.h * sys.face_weight[fi]) +
              0.5 * grid.h * qf * f[fi];
  }
  return out;
}

}  // namespace istab
