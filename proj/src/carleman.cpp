#include "istab/carleman.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <random>

namespace istab {

namespace {

// Interior value with zero Dirichlet extension at boundary vertices.
double value_or_zero(const DomainGrid& g, const Eigen::VectorXi&,
                     const Eigen::VectorXd& u, const Eigen::Vector3i& c) {
  const int id = g.interior_at(c);
  return id >= 0 ? u[id] : 0.0;
}

double volume_weight(const DomainGrid& g) { return std::pow(g.h, g.n); }

}  // namespace

Eigen::VectorXd conjugated_operator(const DomainGrid& grid,
                                    const PotentialField& q, double omega,
                                    double lambda, const Vec3& alpha,
                                    const Eigen::VectorXd& u) {
  if (u.size() != grid.num_interior())
    throw InvalidArgument("conjugated_operator: field size mismatch");
  if (q.values.size() != grid.num_interior())
    throw InvalidArgument("conjugated_operator: potential grid mismatch");
  const double h = grid.h;
  const double inv_h2 = 1.0 / (h * h);
  const double inv_2h = 1.0 / (2.0 * h);
  Eigen::VectorXd out(grid.num_interior());
  for (int id = 0; id < grid.num_interior(); ++id) {
    const Eigen::Vector3i c = grid.interior_coords[id];
    double lap = -2.0 * grid.n * u[id] * inv_h2;
    double adv = 0.0;
    for (int d = 0; d < grid.n; ++d) {
      Eigen::Vector3i cp = c, cm = c;
      cp[d] += 1;
      cm[d] -= 1;
      const double up = value_or_zero(grid, {}, u, cp);
      const double um = value_or_zero(grid, {}, u, cm);
      lap += (up + um) * inv_h2;
      adv += alpha[d] * (up - um) * inv_2h;
    }
    out[id] = lap - 2.0 * lambda * adv +
              (lambda * lambda + omega * omega - q.values[id]) * u[id];
  }
  return out;
}

Eigen::VectorXd normal_derivative_h01(const DomainGrid& grid,
                                      const Eigen::VectorXd& u) {
  const Eigen::VectorXcd uc = u.cast<Complex>();
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(grid.num_faces());
  return neumann_trace(grid, uc, zero).real();
}

CarlemanReport evaluate_carleman(const DomainGrid& grid,
                                 const PotentialField& q, double omega,
                                 double lambda, const Vec3& alpha,
                                 const Eigen::VectorXd& u, double c_const) {
  if (lambda <= 0.0) throw InvalidArgument("evaluate_carleman: lambda <= 0");
  CarlemanReport r;
  r.lambda = lambda;
  r.alpha = alpha.normalized();

  const Eigen::VectorXd dnu = normal_derivative_h01(grid, u);
  for (int f = 0; f < grid.num_faces(); ++f) {
    const double an = r.alpha.dot(grid.faces[f].normal);
    const double flux2 = dnu[f] * dnu[f] * grid.faces[f].ds;
    if (an > 0.0)
      r.rhs_boundary += an * flux2 / lambda;
    else
      r.lhs_boundary += -an * flux2 / lambda;
  }

  const Eigen::VectorXd conj =
      conjugated_operator(grid, q, omega, lambda, r.alpha, u);
  const double vw = volume_weight(grid);
  r.rhs_volume = vw * conj.squaredNorm() / (lambda * lambda);
  r.lhs_volume = c_const * vw * u.squaredNorm();
  r.slack = r.rhs_total() - r.lhs_total();
  return r;
}

CarlemanReport evaluate_remark_form(const DomainGrid& grid,
                                    const PotentialField& q, double omega,
                                    double lambda, const Vec3& alpha,
                                    const Eigen::VectorXd& u_tilde,
                                    double c_const) {
  if (lambda <= 0.0) throw InvalidArgument("evaluate_remark_form: lambda <= 0");
  CarlemanReport r;
  r.lambda = lambda;
  r.alpha = alpha.normalized();

  const Eigen::VectorXd dnu = normal_derivative_h01(grid, u_tilde);
  for (int f = 0; f < grid.num_faces(); ++f) {
    const auto& face = grid.faces[f];
    const double an = r.alpha.dot(face.normal);
    const double w = std::exp(-2.0 * lambda * r.alpha.dot(face.center));
    const double flux2 = w * dnu[f] * dnu[f] * face.ds;
    // Sign-flipped weight: the controlled (left) boundary term now lives on
    // the outflow set {a.nu > 0}; the data (right) term on {a.nu < 0}.
    if (an > 0.0)
      r.lhs_boundary += an * flux2 / lambda;
    else
      r.rhs_boundary += -an * flux2 / lambda;
  }

  // Unconjugated operator (lap + w^2 - q) u_tilde = conjugated form with
  // lambda contribution removed, evaluated via lambda = 0 expansion.
  const double h = grid.h;
  const double inv_h2 = 1.0 / (h * h);
  const double vw = volume_weight(grid);
  double rhs_vol = 0.0, lhs_vol = 0.0;
  for (int id = 0; id < grid.num_interior(); ++id) {
    const Eigen::Vector3i c = grid.interior_coords[id];
    double lap = -2.0 * grid.n * u_tilde[id] * inv_h2;
    for (int d = 0; d < grid.n; ++d) {
      Eigen::Vector3i cp = c, cm = c;
      cp[d] += 1;
      cm[d] -= 1;
      lap += (value_or_zero(grid, {}, u_tilde, cp) +
              value_or_zero(grid, {}, u_tilde, cm)) *
             inv_h2;
    }
    const double op =
        lap + (omega * omega - q.values[id]) * u_tilde[id];
    const double w =
        std::exp(-2.0 * lambda * r.alpha.dot(grid.vertex_pos(c)));
    rhs_vol += w * op * op;
    lhs_vol += w * u_tilde[id] * u_tilde[id];
  }
  r.rhs_volume = vw * rhs_vol / (lambda * lambda);
  r.lhs_volume = c_const * vw * lhs_vol;
  r.slack = r.rhs_total() - r.lhs_total();
  return r;
}

CarlemanCalibration calibrate_constants(
    const DomainGrid& grid, const PotentialField& q, double omega,
    const Vec3& alpha, const std::vector<Eigen::VectorXd>& family,
    const std::vector<double>& lambda_grid) {
  if (family.empty())
    throw InvalidArgument("calibrate_constants: empty family");
  if (lambda_grid.empty())
    throw InvalidArgument("calibrate_constants: empty lambda grid");
  for (std::size_t j = 1; j < lambda_grid.size(); ++j)
    if (lambda_grid[j] <= lambda_grid[j - 1])
      throw InvalidArgument("calibrate_constants: lambda grid not increasing");

  const double vw = volume_weight(grid);
  const int nf = static_cast<int>(family.size());
  const int nl = static_cast<int>(lambda_grid.size());

  // ratio(i, j): largest admissible C for field i at lambda_j (slack with
  // C = 0 divided by ||u||^2); +inf rows for zero fields.
  std::vector<int> live;
  Eigen::MatrixXd ratio(nf, nl);
  for (int i = 0; i < nf; ++i) {
    const double n2 = vw * family[i].squaredNorm();
    if (n2 == 0.0) continue;
    live.push_back(i);
    for (int j = 0; j < nl; ++j) {
      const auto rep = evaluate_carleman(grid, q, omega, lambda_grid[j],
                                         alpha, family[i], 0.0);
      ratio(i, j) = rep.slack / n2;
    }
  }
  CarlemanCalibration cal;
  if (live.empty()) {
    cal.c_emp = 1e6;  // top of the search range; any C works on zero fields
    cal.lambda0_emp = lambda_grid.front();
    cal.degenerate = true;
    return cal;
  }

  for (int j0 = 0; j0 < nl; ++j0) {
    double cmin = std::numeric_limits<double>::infinity();
    for (int i : live)
      for (int j = j0; j < nl; ++j) cmin = std::min(cmin, ratio(i, j));
    if (cmin > 0.0) {
      cal.c_emp = cmin;
      cal.lambda0_emp = lambda_grid[j0];
      return cal;
    }
  }
  // No admissible lambda0: report the worst offender at the top of the grid.
  int worst_i = live.front();
  double worst = std::numeric_limits<double>::infinity();
  for (int i : live)
    if (ratio(i, nl - 1) < worst) {
      worst = ratio(i, nl - 1);
      worst_i = i;
    }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "calibrate_constants: no lambda in the grid yields "
                "nonnegative slack; worst field %d has ratio %.6g at "
                "lambda %.6g",
                worst_i, worst, lambda_grid.back());
  throw ConvergenceError(buf);
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g(16);
  for (int i = 0; i < 16; ++i)
    g[i] = std::pow(10.0, 3.0 * i / 15.0);
  return g;
}

std::vector<Eigen::VectorXd> calibration_family(const DomainGrid& grid,
                                                std::uint64_t seed) {
  std::vector<Eigen::VectorXd> fam;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(-0.25, 0.25);
  std::uniform_real_distribution<double> uw(0.08, 0.2);
  const double vw = volume_weight(grid);

  for (int k = 0; k < 5; ++k) {
    Vec3 center = Vec3::Zero();
    Vec3 width = Vec3::Ones();
    for (int d = 0; d < grid.n; ++d) {
      center[d] = uc(rng);
      width[d] = uw(rng);
    }
    Eigen::VectorXd u(grid.num_interior());
    for (int id = 0; id < grid.num_interior(); ++id) {
      const Vec3 x = grid.vertex_pos(grid.interior_coords[id]);
      double v = 1.0;
      for (int d = 0; d < grid.n; ++d) {
        const double t = (x[d] - center[d]) / width[d];
        v *= std::exp(-0.5 * t * t);
      }
      u[id] = v;
    }
    const double n = std::sqrt(vw) * u.norm();
    if (n > 0.0) u /= n;
    fam.push_back(std::move(u));
  }

  // First Dirichlet Laplacian eigenvectors (dense; calibration grids are
  // small by design).
  auto q0 = make_potential(grid, constant_potential(0.0), "zero", 3, 10.0);
  const auto sys = assemble_operator(grid, q0, 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(sys.A)};
  const int k = std::min<int>(5, grid.num_interior());
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd u = es.eigenvectors().col(j);
    const double n = std::sqrt(vw) * u.norm();
    if (n > 0.0) u /= n;
    fam.push_back(std::move(u));
  }
  return fam;
}

Eigen::VectorXd random_test_field(const DomainGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(-0.3, 0.3);
  std::uniform_real_distribution<double> uw(0.06, 0.18);
  std::uniform_real_distribution<double> ua(0.5, 2.0);
  std::uniform_int_distribution<int> umode(1, 4);
  std::uniform_int_distribution<int> uparts(1, 3);
  std::bernoulli_distribution flip(0.5);

  Eigen::VectorXd u = Eigen::VectorXd::Zero(grid.num_interior());
  const Vec3 lo = grid.spec.center - grid.spec.half_widths;
  const int parts = uparts(rng);
  for (int p = 0; p < parts; ++p) {
    const bool bump = flip(rng);
    const double sign = flip(rng) ? 1.0 : -1.0;  // separate draws: the order
    const double amp = sign * ua(rng);           // inside a*b is unspecified
    Vec3 center = Vec3::Zero(), width = Vec3::Ones();
    Eigen::Vector3i modes = Eigen::Vector3i::Ones();
    for (int d = 0; d < grid.n; ++d) {
      center[d] = uc(rng);
      width[d] = uw(rng);
      modes[d] = umode(rng);
    }
    for (int id = 0; id < grid.num_interior(); ++id) {
      const Vec3 x = grid.vertex_pos(grid.interior_coords[id]);
      double v = amp;
      for (int d = 0; d < grid.n; ++d) {
        if (bump) {
          const double t = (x[d] - center[d]) / width[d];
          v *= std::exp(-0.5 * t * t);
        } else {
          const double L = 2.0 * grid.spec.half_widths[d];
          v *= std::sin(modes[d] * M_PI * (x[d] - lo[d]) / L);
        }
      }
      u[id] += v;
    }
  }
  const double n = std::sqrt(volume_weight(grid)) * u.norm();
  if (n > 0.0) u /= n;
  return u;
}

void write_carleman_csv(const std::string& path,
                        const std::vector<CarlemanRecord>& records) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw InvalidArgument("write_carleman_csv: cannot open " + path);
  std::fprintf(fp,
               "omega,lambda,field_id,lhs_boundary,lhs_volume,rhs_volume,"
               "rhs_boundary,slack\n");
  for (const auto& rec : records) {
    std::fprintf(fp, "%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                 rec.omega, rec.lambda, rec.field_id, rec.report.lhs_boundary,
                 rec.report.lhs_volume, rec.report.rhs_volume,
                 rec.report.rhs_boundary, rec.report.slack);
  }
  std::fclose(fp);
}

}  // namespace istab
