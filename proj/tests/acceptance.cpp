// Acceptance gate: nine pass/fail criteria covering the full chain from the
// complex-frequency algebra to the end-to-end sweep experiment. Prints one
// line per criterion and exits nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "istab/carleman.hpp"
#include "istab/cgo.hpp"
#include "istab/cli.hpp"
#include "istab/fourier.hpp"
#include "istab/pipeline.hpp"

using namespace istab;
namespace fs = std::filesystem;

namespace {

GridSpec unit_cube(double h) {
  GridSpec s;
  s.n = 3;
  s.shape = Shape::Box;
  s.half_widths = Vec3(0.5, 0.5, 0.5);
  s.h = h;
  return s;
}

const Vec3 kAlpha = Vec3::UnitX();
const Vec3 kBeta = Vec3::UnitY();

PotentialField bump_a(const DomainGrid& g) {
  return make_potential(g, gaussian_bump(Vec3(0.15, -0.1, 0.05), 0.22, 1.2),
                        "qa", 3, 10.0);
}

PotentialField bump_b(const DomainGrid& g) {
  return make_potential(g, gaussian_bump(Vec3(-0.12, 0.18, -0.08), 0.25, -0.9),
                        "qb", 3, 10.0);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return "<missing " + path + ">";
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text, const std::string& needle) {
  int count = 0;
  for (auto pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + 1))
    ++count;
  return count;
}

// Shared between criteria 7 and 8: the training sweep and its grid.
std::vector<StabilityRecord> g_train_records;

bool criterion_zeta_algebra(std::string& detail) {
  std::mt19937 rng(20260823u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double omega = 1.5 + 18.5 * u(rng);
    const double lambda = 1.0 + 19.0 * u(rng);
    Vec3 a(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    if (a.norm() < 1e-3) a = Vec3::UnitX();
    a.normalize();
    const Vec3 b = a.cross(std::abs(a.x()) < 0.9 ? Vec3::UnitX()
                                                 : Vec3::UnitY())
                       .normalized();
    const double ximax = 1.8 * std::sqrt(omega * omega + lambda * lambda);
    const Vec3 xi = (ximax * u(rng)) * a.cross(b).normalized();
    const ZetaPair zp = make_zeta_pair(xi, a, b, lambda, omega);
    const double mag2 = omega * omega + 2.0 * lambda * lambda;
    for (const CVec3& z : {zp.zeta1, zp.zeta2}) {
      const Complex dot = z.x() * z.x() + z.y() * z.y() + z.z() * z.z();
      worst = std::max(worst, std::abs(dot - omega * omega));
      worst = std::max(worst, std::abs(z.squaredNorm() - mag2));
    }
  }
  detail = "worst defect " + std::to_string(worst);
  return worst < 1e-8;
}

bool criterion_cgo_decay(std::string& detail) {
  // 32^3 spectral box: domain half-width 0.5, enclosing side 2, h = 1/16.
  const DomainGrid g = build_grid(unit_cube(1.0 / 16));
  const PotentialField q = make_potential(
      g, gaussian_bump(Vec3(0.1, 0.0, -0.05), 0.15, 1.0), "bump", 3, 1e6);
  std::vector<double> xs, ys;
  for (double lambda : {10.0, 15.0, 22.0, 33.0, 50.0, 75.0, 110.0}) {
    const ZetaPair zp = make_zeta_pair(Vec3::Zero(), kAlpha, kBeta, lambda,
                                       2.0);
    const CGOSolution sol = solve_cgo(q, zp, 1, 3);
    if (!(sol.residual < 1e-6)) {
      detail = "solver residual " + std::to_string(sol.residual);
      return false;
    }
    xs.push_back(std::log(zp.magnitude()));
    ys.push_back(std::log(remainder_sobolev_norm(sol, 3)));
  }
  if (std::exp(xs.back() - xs.front()) <= 10.0) {
    detail = "span below one decade";
    return false;
  }
  const LinearFit fit = fit_line(xs, ys);
  detail = "slope " + std::to_string(fit.slope);
  return fit.slope > -1.2 && fit.slope < -0.8;
}

bool criterion_carleman(std::string& detail) {
  const DomainGrid g = build_grid(unit_cube(0.125));
  const PotentialField q = make_potential(
      g, gaussian_bump(Vec3(0.1, 0.0, -0.1), 0.2, 1.5), "q", 3, 1e6);
  // One calibration (C_emp, lambda0_emp), then the property sweep at
  // lambda = 2 lambda0_emp across every omega with the same constants.
  const CarlemanCalibration cal = calibrate_constants(
      g, q, 2.0, kAlpha, calibration_family(g, 0xca11), default_lambda_grid());
  const double lam = 2.0 * cal.lambda0_emp;
  int total = 0, ok = 0;
  for (double omega : {2.0, 5.0, 10.0, 20.0})
    for (int i = 0; i < 200; ++i) {
      const Eigen::VectorXd u =
          random_test_field(g, 1000 * std::lround(omega) + i);
      const CarlemanReport rep =
          evaluate_carleman(g, q, omega, lam, kAlpha, u, cal.c_emp);
      ++total;
      if (rep.slack >= 0.0) ++ok;
    }
  detail = std::to_string(ok) + "/" + std::to_string(total) +
           " nonnegative at lambda " + std::to_string(lam);
  return total == 800 && ok >= static_cast<int>(std::ceil(0.99 * total));
}

bool criterion_green_identity(std::string& detail) {
  double res_coarse = 0.0;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const DomainGrid g = build_grid(unit_cube(h));
    const PotentialField q1 = bump_a(g), q2 = bump_b(g);
    const ZetaPair zp = make_zeta_pair(Vec3::Zero(), kAlpha, kBeta, 2.0, 2.0);
    const double res = green_identity_residual(g, q1, q2, 2.0, zp);
    if (h == 1.0 / 16) {
      res_coarse = res;
      detail = "residual " + std::to_string(res);
      if (!(res < 0.1)) return false;
    } else {
      detail += " -> " + std::to_string(res);
      if (!(res <= 0.6 * res_coarse)) return false;
    }
  }
  return true;
}

bool criterion_fourier_estimator(std::string& detail) {
  const DomainGrid g = build_grid(unit_cube(1.0 / 8));
  const double omega = 2.0, lambda = 4.0, rho = 3.5;
  const BoundaryPartition part = partition_boundary(g, kAlpha, 0.25);
  const BoundaryNormCalculus calc(g);

  // Calibration family: two Gaussian pairs disjoint from the test pairs.
  std::vector<std::pair<PotentialField, PotentialField>> train;
  train.emplace_back(
      make_potential(g, gaussian_bump(Vec3(0.2, 0.1, 0.0), 0.24, 1.0), "t1a",
                     3, 10.0),
      make_potential(g, gaussian_bump(Vec3(-0.1, -0.2, 0.1), 0.27, -0.7),
                     "t1b", 3, 10.0));
  train.emplace_back(
      make_potential(g, gaussian_bump(Vec3(0.0, 0.25, -0.15), 0.3, 0.9), "t2a",
                     3, 10.0),
      make_potential(g, gaussian_bump(Vec3(0.1, 0.0, 0.2), 0.2, 0.5), "t2b", 3,
                     10.0));
  const std::vector<Vec3> train_xis{Vec3(0, 0, 0), Vec3(0, 0, 2.0)};
  const double c_cal = calibrate_estimate_constant(
      g, omega, lambda, kAlpha, kBeta, train, train_xis, part, calc);
  if (!(c_cal > 0.0)) {
    detail = "non-positive calibrated constant";
    return false;
  }

  // Test pairs with known difference: a single windowed cosine mode, and two
  // separated Gaussian bumps.
  const Vec3 xi0(0.0, 0.0, M_PI);
  std::vector<std::pair<PotentialField, PotentialField>> tests;
  tests.emplace_back(
      make_potential(g,
                     add(gaussian_bump(Vec3(0.15, -0.1, 0.05), 0.22, 1.2),
                         windowed_cosine(g.spec, xi0, 0.6)),
                     "qa+cos", 3, 10.0),
      bump_a(g));
  tests.emplace_back(bump_a(g), bump_b(g));
  const std::vector<std::vector<Vec3>> test_xis{
      {Vec3(0, 0, 0), xi0}, {Vec3(0, 0, 0), Vec3(0, 0, 1.0), Vec3(0, 1.5, 1.0)}};

  double worst_ratio = 0.0;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const PotentialField& q1 = tests[t].first;
    const PotentialField& q2 = tests[t].second;
    const DNOperator d1 = build_dn(g, q1, omega, false);
    const DNOperator d2 = build_dn(g, q2, omega, false);
    const double gap = dn_gap(d1, d2, part, calc);
    const DNOperator diff = dn_difference(d1, d2);
    for (const Vec3& xi : test_xis[t]) {
      if (xi.norm() > rho) {
        detail = "test mode outside |xi| <= rho";
        return false;
      }
      const Vec3 beta_xi =
          xi.norm() > 0 ? Vec3(kAlpha.cross(xi).normalized()) : kBeta;
      const ZetaPair zp = make_zeta_pair(xi, kAlpha, beta_xi, lambda, omega);
      const CGOSolution c1 = solve_cgo(q1, zp, 1, 3);
      const CGOSolution c2 = solve_cgo(q2, zp, 2, 3);
      const FourierModeEstimate est = estimate_fourier_mode(
          xi, lambda, omega, diff, c1, c2, part, gap, c_cal);
      const Complex truth = fourier_truth(g, q1, q2, xi);
      const double err = std::abs(est.value - truth);
      const double bound = est.bound_data_term + est.bound_lambda_term;
      worst_ratio = std::max(worst_ratio, err / bound);
      if (!(err <= bound)) {
        detail = "bound violated at |xi| " + std::to_string(xi.norm());
        return false;
      }
    }
  }
  detail = "worst error/bound " + std::to_string(worst_ratio);
  return true;
}

bool criterion_schedule(std::string& detail) {
  std::mt19937 rng(20260823u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double min_margin = 1e300;
  for (int i = 0; i < 500; ++i) {
    const double omega = 1.5 + 100.0 * u(rng);
    const double theta = (i % 3 == 0) ? 0.3 : (i % 3 == 1 ? 0.5 : 0.7);
    const int n = (i % 2 == 0) ? 3 : 2;
    const double s = n / 2 + 1;
    // Probe first for this configuration's delta, then draw a gap below it.
    const ScheduleParams probe =
        schedule_params(omega, 0.0, n, s, theta, 1.0, 10.0, 1.0, 0.0, 0.1);
    ScheduleParams sp;
    try {
      sp = schedule_params(omega, 0.0, n, s, theta, 1.0, 10.0, 1.0, 0.0, 0.1,
                           probe.log_delta * (1.0 + 3.0 * u(rng) + 1e-9));
    } catch (const std::exception& e) {
      detail = std::string("chain violated: ") + e.what();
      return false;
    }
    if (!(sp.log_delta < 0.0)) {
      detail = "delta >= 1";
      return false;
    }
    const double rho_l = std::pow(sp.rho, sp.l);
    min_margin = std::min(
        {min_margin, sp.rho - std::pow(sp.lambda_tilde, 1.0 / sp.l),
         sp.lambda - rho_l, rho_l - sp.lambda_tilde,
         sp.lambda_tilde - sp.lambda0, sp.lambda - sp.rho,
         std::sqrt(omega * omega + 2.0 * sp.lambda * sp.lambda) - sp.c2m});
  }
  // Delta depends on the schedule constants only, never on omega.
  const ScheduleParams a =
      schedule_params(2.0, 0.5, 3, 3.0, 0.5, 1.0, 10.0, 1.0, 0.0, 0.1);
  const ScheduleParams b =
      schedule_params(500.0, 0.5, 3, 3.0, 0.5, 1.0, 10.0, 1.0, 0.0, 0.1);
  if (a.log_delta != b.log_delta) {
    detail = "delta depends on omega";
    return false;
  }
  detail = "500 chains, min link margin " + std::to_string(min_margin);
  return min_margin > 0.0;
}

bool criterion_increasing_stability(std::string& detail) {
  const DomainGrid g = build_grid(unit_cube(1.0 / 8));
  ExperimentConfig cfg;
  cfg.family = "frozen8";
  const auto pairs = build_family(cfg, g);
  StabilityOptions opts;
  opts.jobs = 4;
  const SweepResult res =
      run_sweep(g, pairs, {2.0, 4.0, 8.0, 16.0}, kAlpha, 0.25, opts);
  g_train_records = res.records;
  if (res.beta.size() != 4) {
    detail = "expected 4 fitted exponents, got " +
             std::to_string(res.beta.size());
    return false;
  }
  std::ostringstream ss;
  ss << "beta =";
  for (const auto& [omega, beta] : res.beta) ss << ' ' << beta;
  detail = ss.str();
  // Non-decreasing over at least 3 of the 4 omega values (a window of two
  // consecutive non-decreasing steps) and strictly larger at the ends.
  bool window = false;
  for (std::size_t i = 0; i + 2 < res.beta.size(); ++i)
    window = window || (res.beta[i + 1].second >= res.beta[i].second &&
                        res.beta[i + 2].second >= res.beta[i + 1].second);
  return window && res.beta.back().second > res.beta.front().second;
}

bool criterion_bound_verification(std::string& detail) {
  if (g_train_records.empty()) {
    detail = "no training records (previous criterion failed)";
    return false;
  }
  const double log_c = calibrate_stability_constant(g_train_records);

  // Disjoint test family (including one identical pair, which exercises the
  // capped small-discrepancy branch), verified with 1.5x headroom.
  const DomainGrid g = build_grid(unit_cube(1.0 / 8));
  ExperimentConfig cfg;
  cfg.family = "holdout4";
  const auto pairs = build_family(cfg, g);
  StabilityOptions opts;
  opts.jobs = 4;
  opts.log_c = log_c + std::log(1.5);
  const SweepResult res =
      run_sweep(g, pairs, {2.0, 4.0, 8.0, 16.0}, kAlpha, 0.25, opts);
  bool saw_large = false, saw_small = false;
  double worst = -1e300;
  for (const StabilityRecord& rec : res.records) {
    if (!rec.ok) {
      detail = rec.pair_name + ": " + rec.error;
      return false;
    }
    saw_large = saw_large || rec.large_gap;
    saw_small = saw_small || rec.schedule.small_gap;
    if (rec.linfty > 0.0) {
      worst = std::max(worst, std::log(rec.linfty) - rec.log_rhs_stab);
      if (!(std::log(rec.linfty) <= rec.log_rhs_stab)) {
        detail = "bound violated on " + rec.pair_name;
        return false;
      }
    }
  }
  if (!saw_large || !saw_small) {
    detail = "both regimes were not exercised";
    return false;
  }
  detail = "max ln(linfty) - ln(rhs) = " + std::to_string(worst) + " over " +
           std::to_string(res.records.size()) + " records";
  return true;
}

bool criterion_determinism(std::string& detail) {
  const fs::path work = "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string cache = (work / "cache").string();
  for (int i = 1; i <= 3; ++i) {
    std::ofstream cfg(work / ("run" + std::to_string(i) + ".cfg"));
    cfg << "grid.n = 3\ngrid.h = 0.125\ngrid.half_width = 0.5\n"
        << "family = holdout4\nomega_grid = 2,4\n"
        << "cache_dir = " << cache << "\n"
        << "output_dir = " << (work / ("out" + std::to_string(i))).string()
        << "\n";
  }
  const auto run = [&](const std::string& args, const std::string& tag) {
    const std::string log = (work / (tag + ".log")).string();
    const std::string cmd = std::string(ISTAB_CLI_PATH) + " sweep " + args +
                            " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return std::make_pair(code, slurp(log));
  };

  const auto [code1, log1] =
      run("--config " + (work / "run1.cfg").string(), "cold");
  const auto [code2, log2] =
      run("--config " + (work / "run2.cfg").string(), "warm");
  const auto [code3, log3] =
      run("--config " + (work / "run3.cfg").string() + " --seed 99", "seed");
  if (code1 != 0 || code2 != 0 || code3 != 0) {
    detail = "sweep exit codes " + std::to_string(code1) + "/" +
             std::to_string(code2) + "/" + std::to_string(code3);
    return false;
  }
  const int cold_solves = count_lines(log1, "dn-solve");
  const int warm_solves = count_lines(log2, "dn-solve");
  const int warm_hits = count_lines(log2, "dn-cache-hit");
  if (cold_solves == 0 || warm_solves != 0 || warm_hits != cold_solves) {
    detail = "cache counters: cold " + std::to_string(cold_solves) +
             " solves, warm " + std::to_string(warm_solves) + " solves / " +
             std::to_string(warm_hits) + " hits";
    return false;
  }
  for (const char* name :
       {"sweep_records.csv", "sweep_beta.csv", "sweep_scatter.svg"}) {
    const std::string a = slurp((work / "out1" / name).string());
    if (a != slurp((work / "out2" / name).string()) ||
        a != slurp((work / "out3" / name).string())) {
      detail = std::string("outputs differ: ") + name;
      return false;
    }
  }
  detail = std::to_string(cold_solves) +
           " cold solves, 0 warm re-solves, byte-identical outputs";
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_seconds;  // 0 = no limit
    bool (*fn)(std::string&);
  };
  const Criterion criteria[] = {
      {"zeta-algebra", 1.0, criterion_zeta_algebra},
      {"cgo-remainder-decay", 300.0, criterion_cgo_decay},
      {"carleman-inequality", 120.0, criterion_carleman},
      {"green-identity", 300.0, criterion_green_identity},
      {"fourier-estimator", 600.0, criterion_fourier_estimator},
      {"schedule-invariants", 1.0, criterion_schedule},
      {"increasing-stability", 1800.0, criterion_increasing_stability},
      {"bound-verification", 900.0, criterion_bound_verification},
      {"determinism-and-cache", 0.0, criterion_determinism},
  };

  int failures = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (ok && c.limit_seconds > 0.0 && secs > c.limit_seconds) {
      ok = false;
      detail += " [over the " + std::to_string(c.limit_seconds) + " s budget]";
    }
    std::printf("%s criterion %d %-22s %8.2f s  %s\n", ok ? "PASS" : "FAIL",
                index, c.name, secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
