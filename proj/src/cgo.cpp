#include "istab/cgo.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace istab {

namespace {

// Half-bin-shifted wavenumber (2 pi / side)(m + 1/2) per axis.
Vec3 shifted_wavenumber(const PeriodicBox& box, std::size_t idx) {
  Vec3 k = box.wavenumber(idx);
  const double half = M_PI / box.side;
  for (int d = 0; d < box.n; ++d) k[d] += half;
  return k;
}

// Per-point phase e^{i pi (ix+iy+iz)/N} carrying the half-bin shift.
PeriodicBox::Field shift_phase(const PeriodicBox& box) {
  PeriodicBox::Field ph(box.size());
  const int N = box.npts;
  for (std::size_t idx = 0; idx < box.size(); ++idx) {
    const int i = static_cast<int>(idx % N);
    const int j = static_cast<int>((idx / N) % N);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(N) * N));
    ph[idx] = std::exp(Complex(0.0, M_PI * (i + j + k) / N));
  }
  return ph;
}

}  // namespace

double ZetaPair::magnitude() const {
  return std::sqrt(omega * omega + 2.0 * lambda * lambda);
}

ZetaPair make_zeta_pair(const Vec3& xi, const Vec3& alpha, const Vec3& beta,
                        double lambda, double omega) {
  const double tol = 1e-10;
  if (std::abs(alpha.norm() - 1.0) > tol || std::abs(beta.norm() - 1.0) > tol)
    throw InvalidArgument("make_zeta_pair: alpha and beta must be unit");
  if (std::abs(xi.dot(alpha)) > tol || std::abs(xi.dot(beta)) > tol ||
      std::abs(alpha.dot(beta)) > tol)
    throw InvalidArgument("make_zeta_pair: xi, alpha, beta not orthogonal");
  if (lambda < 1.0) throw InvalidArgument("make_zeta_pair: lambda < 1");
  if (omega <= 1.0) throw InvalidArgument("make_zeta_pair: omega <= 1");
  const double radicand =
      omega * omega + lambda * lambda - xi.squaredNorm() / 4.0;
  if (radicand <= 0.0)
    throw InvalidArgument("make_zeta_pair: radicand <= 0 (|xi| too large)");

  ZetaPair zp;
  zp.xi = xi;
  zp.alpha = alpha;
  zp.beta = beta;
  zp.lambda = lambda;
  zp.omega = omega;
  zp.s_mag = std::sqrt(radicand);
  for (int d = 0; d < 3; ++d) {
    zp.zeta1[d] = Complex(0.5 * xi[d] - zp.s_mag * beta[d], lambda * alpha[d]);
    zp.zeta2[d] =
        Complex(-0.5 * xi[d] - zp.s_mag * beta[d], -lambda * alpha[d]);
  }
  return zp;
}

Complex CGOSolution::u_at(std::size_t idx) const {
  const Vec3 x = box.point(idx);
  Complex phase(0.0, 0.0);
  for (int d = 0; d < 3; ++d) phase += zeta[d] * x[d];
  return std::exp(Complex(0.0, 1.0) * phase) * (Complex(1.0, 0.0) + r[idx]);
}

Complex CGOSolution::r_eval(const Vec3& x) const {
  // r(x) = (1/N) sum_k rhat_k e^{i k.(x - origin)} over the shifted discrete
  // wavenumbers; exact at lattice points.
  Complex acc(0.0, 0.0);
  const Vec3 rel = x - box.origin;
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Vec3 k = shifted_wavenumber(box, i);
    acc += rhat[i] * std::exp(Complex(0.0, k.dot(rel)));
  }
  return acc / static_cast<double>(box.size());
}

Complex CGOSolution::u_eval(const Vec3& x) const {
  Complex phase(0.0, 0.0);
  for (int d = 0; d < 3; ++d) phase += zeta[d] * x[d];
  return std::exp(Complex(0.0, 1.0) * phase) * (Complex(1.0, 0.0) + r_eval(x));
}

CGOSolution solve_remainder(const PotentialField& q, const CVec3& zeta, int s,
                            double tol, int max_iter, double margin,
                            int npts_min) {
  if (!q.grid) throw InvalidArgument("solve_remainder: potential has no grid");
  if (q.grid->n != 3)
    throw InvalidArgument("solve_remainder: exponential solutions need n = 3");
  const DomainGrid& g = *q.grid;
  const double side = 2.0 * g.enclosing_radius * (1.0 + margin);
  const int npts =
      std::max(npts_min, static_cast<int>(std::lround(side / g.h)));

  CGOSolution sol{PeriodicBox(3, side, npts)};
  sol.zeta = zeta;
  sol.radius = g.enclosing_radius;
  const PeriodicBox& box = sol.box;
  const std::size_t size = box.size();

  const double zeta2 = zeta.squaredNorm();  // omega^2 + 2 lambda^2
  const double floor = 1e-8 * zeta2;

  // Floored multiplier symbol |k|^2 + 2 zeta.k per shifted mode.
  std::vector<Complex> symbol(size);
  int floor_hits = 0;
  for (std::size_t i = 0; i < size; ++i) {
    const Vec3 k = shifted_wavenumber(box, i);
    Complex sden(k.squaredNorm(), 0.0);
    for (int d = 0; d < 3; ++d) sden += 2.0 * zeta[d] * k[d];
    if (std::abs(sden) < floor) {
      ++floor_hits;
      sden = (sden == Complex(0.0, 0.0)) ? Complex(floor, 0.0)
                                         : sden * (floor / std::abs(sden));
    }
    symbol[i] = sden;
  }
  sol.symbol_floor_hits = floor_hits;
  if (floor_hits > static_cast<int>(0.001 * static_cast<double>(size)))
    throw AssumptionError(
        "solve_remainder: multiplier symbol below floor on > 0.1% of modes "
        "(resonant grid); perturb lambda or remesh");

  const PeriodicBox::Field qs = sample_zero_extended(box, q);
  const PeriodicBox::Field ph = shift_phase(box);
  // Shifted analysis/synthesis: coefficients of e^{i k_shift.(x-origin)} are
  // the plain DFT of f * conj(phase); synthesis multiplies back by phase.
  auto shifted_fft = [&](const PeriodicBox::Field& f) {
    PeriodicBox::Field g(size);
    for (std::size_t i = 0; i < size; ++i) g[i] = f[i] * std::conj(ph[i]);
    return box.fft(g);
  };
  auto shifted_ifft = [&](const PeriodicBox::Field& fhat) {
    PeriodicBox::Field g = box.ifft(fhat);
    for (std::size_t i = 0; i < size; ++i) g[i] *= ph[i];
    return g;
  };

  PeriodicBox::Field r(size, Complex(0.0, 0.0));
  PeriodicBox::Field w(size);
  PeriodicBox::Field prev = r;
  bool converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    for (std::size_t i = 0; i < size; ++i)
      w[i] = -qs[i] * (Complex(1.0, 0.0) + prev[i]);
    PeriodicBox::Field what = shifted_fft(w);
    for (std::size_t i = 0; i < size; ++i) what[i] /= symbol[i];
    r = shifted_ifft(what);
    double diff2 = 0.0, norm2 = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      diff2 += std::norm(r[i] - prev[i]);
      norm2 += std::norm(r[i]);
    }
    sol.iterations = it;
    if (diff2 <= tol * tol * std::max(norm2, 1e-30) ||
        (norm2 == 0.0 && diff2 == 0.0)) {
      converged = true;
      sol.rhat = std::move(what);
      break;
    }
    if (!std::isfinite(norm2) || norm2 > 1e60)
      throw ConvergenceError(
          "solve_remainder: fixed point diverged (|zeta| too small for ||q||)");
    prev = r;
  }
  if (!converged)
    throw ConvergenceError(
        "solve_remainder: no convergence within max_iter (|zeta| too small "
        "for ||q||)");

  // Relative residual of the conjugated equation in frequency space:
  // symbol * rhat + fft(q (1 + r)).
  PeriodicBox::Field rhs(size);
  for (std::size_t i = 0; i < size; ++i)
    rhs[i] = qs[i] * (Complex(1.0, 0.0) + r[i]);
  const PeriodicBox::Field rhshat = shifted_fft(rhs);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    num += std::norm(symbol[i] * sol.rhat[i] + rhshat[i]);
    den += std::norm(rhshat[i]);
  }
  sol.residual = den > 0.0 ? std::sqrt(num / den) : 0.0;
  sol.r = std::move(r);
  static_cast<void>(s);
  return sol;
}

CGOSolution solve_cgo(const PotentialField& q, const ZetaPair& zp, int which,
                      int s, double tol, int max_iter, double margin,
                      int npts_min) {
  if (which != 1 && which != 2)
    throw InvalidArgument("solve_cgo: which must be 1 or 2");
  auto run = [&](const ZetaPair& p, bool perturbed) {
    CGOSolution sol = solve_remainder(q, which == 1 ? p.zeta1 : p.zeta2, s,
                                      tol, max_iter, margin, npts_min);
    sol.omega = p.omega;
    sol.lambda = p.lambda;
    sol.lambda_perturbed = perturbed;
    return sol;
  };
  try {
    return run(zp, false);
  } catch (const AssumptionError&) {
    const ZetaPair nudged = make_zeta_pair(
        zp.xi, zp.alpha, zp.beta, zp.lambda * (1.0 + 1e-6), zp.omega);
    return run(nudged, true);
  }
}

double remainder_sobolev_norm(const CGOSolution& sol, double s) {
  const PeriodicBox& box = sol.box;
  double acc = 0.0;
  for (std::size_t i = 0; i < box.size(); ++i) {
    const double k2 = shifted_wavenumber(box, i).squaredNorm();
    acc += std::pow(1.0 + k2, s) * std::norm(sol.rhat[i]);
  }
  return std::sqrt(acc * box.cell_volume() /
                   static_cast<double>(box.size()));
}

RemainderBound verify_remainder_bound(const CGOSolution& sol,
                                      const PotentialField& q, double c1) {
  RemainderBound b;
  const double qn = potential_sobolev_norm(q, q.s);
  if (qn == 0.0) {
    b.ratio = 0.0;
    b.ok = true;
    return b;
  }
  const double rn = remainder_sobolev_norm(sol, q.s);
  const double zmag = std::sqrt(sol.zeta.squaredNorm());
  b.ratio = rn * zmag / qn;
  b.ok = b.ratio <= c1;
  return b;
}

double cgo_sobolev_norm(const CGOSolution& sol, const DomainGrid& grid,
                        int order) {
  if (order != 1 && order != 2)
    throw InvalidArgument("cgo_sobolev_norm: order must be 1 or 2");
  const PeriodicBox& box = sol.box;
  const int N = box.npts;
  const double sp = box.spacing();
  const double vol = box.cell_volume();

  auto wrap = [N](int i) { return ((i % N) + N) % N; };
  auto uat = [&](int i, int j, int k) {
    return sol.u_at(box.flat(wrap(i), wrap(j), wrap(k)));
  };
  // Trapezoid weight of a lattice point against the domain: boundary-plane
  // points of a box count half per touching plane.
  auto quad_weight = [&](const Vec3& x) -> double {
    if (grid.spec.shape != Shape::Box)
      return point_inside(grid.spec, x) ? 1.0 : 0.0;
    double w = 1.0;
    for (int d = 0; d < grid.n; ++d) {
      const double t = std::abs(x[d] - grid.spec.center[d]) -
                       grid.spec.half_widths[d];
      if (t > 1e-9) return 0.0;
      if (t > -1e-9) w *= 0.5;
    }
    return w;
  };

  double acc = 0.0;
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec3 x = box.point(box.flat(i, j, k));
        const double qw = quad_weight(x);
        if (qw == 0.0) continue;
        const Complex u = uat(i, j, k);
        double cell = std::norm(u);
        for (int d = 0; d < 3; ++d) {
          int ip[3] = {i, j, k}, im[3] = {i, j, k};
          ip[d] += 1;
          im[d] -= 1;
          const Complex up = uat(ip[0], ip[1], ip[2]);
          const Complex um = uat(im[0], im[1], im[2]);
          cell += std::norm((up - um) / (2.0 * sp));
          if (order == 2) {
            cell += std::norm((up - 2.0 * u + um) / (sp * sp));
            for (int e = d + 1; e < 3; ++e) {
              int pp[3] = {i, j, k}, pm[3] = {i, j, k}, mp[3] = {i, j, k},
                  mm[3] = {i, j, k};
              pp[d] += 1; pp[e] += 1;
              pm[d] += 1; pm[e] -= 1;
              mp[d] -= 1; mp[e] += 1;
              mm[d] -= 1; mm[e] -= 1;
              const Complex mixed =
                  (uat(pp[0], pp[1], pp[2]) - uat(pm[0], pm[1], pm[2]) -
                   uat(mp[0], mp[1], mp[2]) + uat(mm[0], mm[1], mm[2])) /
                  (4.0 * sp * sp);
              cell += 2.0 * std::norm(mixed);
            }
          }
        }
        acc += qw * cell;
      }
  return std::sqrt(acc * vol);
}

double cgo_norm_bound(const CGOSolution& sol, int order, double c) {
  if (order != 1 && order != 2)
    throw InvalidArgument("cgo_norm_bound: order must be 1 or 2");
  const double zeta2 =
      sol.omega * sol.omega + 2.0 * sol.lambda * sol.lambda;
  return c * std::pow(zeta2, 0.5 * order) *
         std::exp(sol.lambda * sol.radius);
}

CgoCalibration calibrate_cgo(const DomainGrid& grid, std::uint64_t seed,
                             int s, int max_iter) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(-0.25, 0.25);
  std::uniform_real_distribution<double> uw(0.12, 0.25);
  std::uniform_real_distribution<double> ua(0.5, 3.0);

  std::vector<PotentialField> suite;
  for (int i = 0; i < 10; ++i) {
    // Draw into locals first: evaluation order inside an argument list is
    // unspecified and would make the suite compiler-dependent.
    const double cx = uc(rng), cy = uc(rng), cz = uc(rng);
    const double width = uw(rng), amp = ua(rng);
    suite.push_back(
        make_potential(grid, gaussian_bump(Vec3(cx, cy, cz), width, amp),
                       "cal" + std::to_string(i), s, 1e9));
  }

  const double omega = 2.0;
  std::vector<double> multipliers;
  for (int i = 0; i < 20; ++i)
    multipliers.push_back(0.02 * std::pow(2.0, 0.5 * i));  // 0.02 .. ~14.5

  CgoCalibration cal;
  cal.c2 = 0.0;
  double worst_ratio = 0.0;
  for (double m : multipliers) {
    bool all_ok = true;
    double worst_here = 0.0;
    for (const auto& q : suite) {
      const double qn = potential_sobolev_norm(q, s);
      const double zmag = m * qn;
      // lambda >= 1 requires |zeta|^2 = omega^2 + 2 lambda^2 >= omega^2 + 2.
      if (zmag * zmag <= omega * omega + 2.0) {
        all_ok = false;
        break;
      }
      const double lambda =
          std::sqrt((zmag * zmag - omega * omega) / 2.0);
      const auto zp = make_zeta_pair(Vec3::Zero(), Vec3::UnitX(),
                                     Vec3::UnitY(), lambda, omega);
      try {
        const auto sol = solve_cgo(q, zp, 1, s, 1e-10, max_iter, 0.5, 16);
        const auto b = verify_remainder_bound(sol, q, 1e300);
        worst_here = std::max(worst_here, b.ratio);
      } catch (const ConvergenceError&) {
        all_ok = false;
        break;
      }
    }
    if (all_ok) {
      if (cal.c2 == 0.0) cal.c2 = m;
      worst_ratio = std::max(worst_ratio, worst_here);
    } else {
      cal.c2 = 0.0;  // require convergence for every multiplier above c2
      worst_ratio = 0.0;
    }
  }
  if (cal.c2 == 0.0)
    throw ConvergenceError(
        "calibrate_cgo: no multiplier in the ladder converged for the whole "
        "suite");
  cal.c1 = 1.5 * worst_ratio;
  return cal;
}

void write_cgo_field(const std::string& path, const CGOSolution& sol) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw InvalidArgument("write_cgo_field: cannot open " + path);
  std::fprintf(fp, "# complex grid field\nn %d\nnpts %d\nside %.17g\n",
               sol.box.n, sol.box.npts, sol.box.side);
  for (std::size_t i = 0; i < sol.box.size(); ++i)
    std::fprintf(fp, "%zu %.17g %.17g\n", i, sol.r[i].real(), sol.r[i].imag());
  std::fclose(fp);
}

}  // namespace istab
