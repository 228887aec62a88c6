#include "istab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace istab {

namespace {

void fail_link(const std::string& what) {
  throw AssumptionError("schedule_params: chain link failed: " + what);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ScheduleParams schedule_params(double omega, double dn_gap, int n, double s,
                               double theta, double r, double m,
                               double lambda0, double c2m, double margin,
                               std::optional<double> log_gap_override) {
  if (omega <= 1.0) throw InvalidArgument("schedule_params: omega must be > 1");
  if (theta <= 0.0 || theta >= 1.0)
    throw InvalidArgument("schedule_params: theta must lie in (0,1)");
  if (n < 2 || n > 3) throw InvalidArgument("schedule_params: n must be 2 or 3");
  if (s < n / 2 + 1)
    throw InvalidArgument("schedule_params: s must be >= [n/2]+1");
  if (dn_gap < 0.0) throw InvalidArgument("schedule_params: negative gap");
  if (margin <= 0.0) throw InvalidArgument("schedule_params: margin <= 0");

  ScheduleParams sp;
  sp.n = n;
  sp.s = s;
  sp.theta = theta;
  sp.r = r;
  sp.m = m;
  sp.lambda0 = lambda0;
  sp.c2m = c2m;
  sp.omega = omega;
  sp.dn_gap = dn_gap;

  sp.eta = (s - 0.5 * n) / 2.0;
  if (sp.eta <= 0.0)
    throw InvalidArgument("schedule_params: s = n/2 + 2 eta needs s > n/2");
  sp.p = (1.0 + s - sp.eta) / (1.0 + s);

  sp.k = n / theta + 4.0 * n * (1.0 - theta) / theta + 5.0 * r +
         (n + 2.0) / theta;
  sp.l = (3.0 * n - 2.0 * n * theta + 2.0) / theta;
  sp.lambda_tilde = std::max({1.0, lambda0, c2m}) * (1.0 + margin);
  sp.log_delta = -std::exp(sp.k * std::pow(sp.lambda_tilde, 1.0 / sp.l));
  sp.delta = std::exp(sp.log_delta);

  if (log_gap_override) {
    sp.log_gap = *log_gap_override;
  } else if (dn_gap == 0.0) {
    // Zero measured gap: the limit point of the small-gap regime. ln(0) is
    // not representable, so the chain is evaluated just inside the region
    // and the record is flagged. The offset is multiplicative: an additive
    // one would leave the chain inequalities within roundoff of equality
    // (|ln delta| ~ 1e15 here).
    sp.log_gap = sp.log_delta * (1.0 + 1e-9);
    sp.gap_capped = true;
  } else {
    sp.log_gap = std::log(dn_gap);
  }

  sp.small_gap = sp.log_gap < sp.log_delta;
  if (!sp.small_gap) return sp;

  sp.rho = (1.0 / sp.k) * std::log(std::log(omega) + std::abs(sp.log_gap));
  sp.lambda = std::pow(sp.rho, (n + 2.0) / theta) *
              std::exp(2.0 * n * sp.rho * (1.0 - theta) / theta);

  // Gaps sitting right at delta leave the chain within roundoff of
  // equality; the verification allows that much slack and no more.
  const double tol = 1.0 - 1e-12;
  const double lam_tilde_root = std::pow(sp.lambda_tilde, 1.0 / sp.l);
  if (!(sp.rho >= lam_tilde_root * tol))
    fail_link("rho >= lambda_tilde^{1/L} (rho = " + fmt(sp.rho) + ")");
  const double rho_l = std::pow(sp.rho, sp.l);
  if (!(sp.lambda >= rho_l * tol)) fail_link("lambda >= rho^L");
  if (!(rho_l >= sp.lambda_tilde * tol)) fail_link("rho^L >= lambda_tilde");
  if (!(sp.lambda_tilde > lambda0)) fail_link("lambda_tilde > lambda0");
  if (!(sp.rho <= sp.lambda)) fail_link("rho <= lambda");
  if (!(sp.lambda <= 2.0 * (sp.lambda * sp.lambda + omega * omega)))
    fail_link("lambda <= 2(lambda^2+omega^2)");
  if (!(std::sqrt(omega * omega + 2.0 * sp.lambda * sp.lambda) > c2m))
    fail_link("sqrt(omega^2+2 lambda^2) > C2M");
  if (!(sp.l >= 1.0)) fail_link("L >= 1");
  if (!(sp.log_delta < 0.0)) fail_link("delta < 1");
  return sp;
}

Hm1Split hminus1_split(const PeriodicBox& box,
                       const PeriodicBox::Field& qdiff_hat, double rho) {
  if (qdiff_hat.size() != box.size())
    throw InvalidArgument("hminus1_split: field size mismatch");
  if (rho <= 0.0) throw InvalidArgument("hminus1_split: rho must be positive");
  Hm1Split out;
  const double scale =
      box.cell_volume() / static_cast<double>(box.size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    const double k2 = box.wavenumber(i).squaredNorm();
    const double w = scale * std::norm(qdiff_hat[i]) / (1.0 + k2);
    if (std::sqrt(k2) < rho)
      out.low += w;
    else
      out.high += w;
  }
  out.total = out.low + out.high;
  return out;
}

double interpolate_linfty(double hminus1, double s, double hs_bound, int n,
                          double c) {
  if (hminus1 < 0.0) throw InvalidArgument("interpolate_linfty: negative norm");
  const double eta = (s - 0.5 * n) / 2.0;
  if (eta <= 0.0) throw InvalidArgument("interpolate_linfty: needs s > n/2");
  const double p = (1.0 + s - eta) / (1.0 + s);
  return c * std::pow(hminus1, eta / (1.0 + s)) * std::pow(hs_bound, p);
}

double large_gap_bound(double delta, double m, double theta, double dn_gap,
                       double c) {
  if (delta <= 0.0)
    return std::numeric_limits<double>::infinity();  // use the log form
  if (dn_gap < delta)
    throw InvalidArgument("large_gap_bound: called in the small-gap regime");
  return 2.0 * c * m * std::pow(dn_gap / delta, theta / 2.0);
}

double log_large_gap_bound(double log_delta, double m, double theta,
                           double log_gap, double log_c) {
  if (log_gap < log_delta)
    throw InvalidArgument(
        "log_large_gap_bound: called in the small-gap regime");
  return log_c + std::log(2.0 * m) + 0.5 * theta * (log_gap - log_delta);
}

double stability_rhs(double omega, double dn_gap, const ScheduleParams& sp,
                     double c, double ln_cap, bool* capped) {
  if (dn_gap < 0.0) throw InvalidArgument("stability_rhs: negative gap");
  double abs_ln_gap;
  bool hit_cap = false;
  if (dn_gap == 0.0) {
    abs_ln_gap = ln_cap;
    hit_cap = true;
  } else {
    abs_ln_gap = std::min(std::abs(std::log(dn_gap)), ln_cap);
    hit_cap = std::abs(std::log(dn_gap)) > ln_cap;
  }
  if (capped) *capped = hit_cap;
  const double rho =
      (1.0 / sp.k) * std::log(std::log(omega) + abs_ln_gap);
  const double second = std::pow(rho, -2.0 / sp.theta);
  const double first = std::pow(omega, 7.0) * dn_gap;
  const double outer = sp.theta * sp.eta / (2.0 * (1.0 + sp.s));
  return c * std::pow(first + second, outer);
}

SweepResult run_sweep(
    const DomainGrid& grid,
    const std::vector<std::pair<PotentialField, PotentialField>>& pairs,
    const std::vector<double>& omegas, const Vec3& alpha, double epsilon,
    const StabilityOptions& opts) {
  const BoundaryPartition part = partition_boundary(grid, alpha, epsilon);
  const BoundaryNormCalculus calc(grid);
  const double r = grid.enclosing_radius;
  const int npts =
      std::max(16, static_cast<int>(std::lround(2.0 * r / grid.h)));
  const PeriodicBox box(grid.n, 2.0 * r, npts);

  // DN operators cached by (potential, omega) across pairs.
  std::map<std::pair<std::uint64_t, double>, DNOperator> dn_cache;
  auto dn_for = [&](const PotentialField& q, double omega) -> const DNOperator& {
    const auto key = std::make_pair(q.hash(), omega);
    auto it = dn_cache.find(key);
    if (it == dn_cache.end())
      it = dn_cache
               .emplace(key, opts.dn_provider
                                 ? opts.dn_provider(q, omega)
                                 : build_dn(grid, q, omega, false, opts.jobs))
               .first;
    return it->second;
  };

  SweepResult out;
  for (double omega : omegas) {
    std::vector<double> lg, lh;  // per-omega regression samples
    for (const auto& [q1, q2] : pairs) {
      StabilityRecord rec;
      rec.pair_name = q1.name + "|" + q2.name;
      rec.omega = omega;
      try {
        const DNOperator& d1 = dn_for(q1, omega);
        const DNOperator& d2 = dn_for(q2, omega);
        rec.dn_gap = dn_gap(d1, d2, part, calc);

        const auto s1 = sample_zero_extended(box, q1);
        const auto s2 = sample_zero_extended(box, q2);
        PeriodicBox::Field diff(box.size());
        for (std::size_t i = 0; i < box.size(); ++i) diff[i] = s1[i] - s2[i];
        rec.hminus1 = box.sobolev_norm(diff, -1.0);

        double linf = 0.0;
        Eigen::Vector3i cc;
        for (cc.z() = 0; cc.z() < grid.dims.z(); ++cc.z())
          for (cc.y() = 0; cc.y() < grid.dims.y(); ++cc.y())
            for (cc.x() = 0; cc.x() < grid.dims.x(); ++cc.x()) {
              const Vec3 x = grid.vertex_pos(cc);
              linf = std::max(linf, std::abs(q1.eval(x) - q2.eval(x)));
            }
        rec.linfty = linf;

        rec.schedule = schedule_params(omega, rec.dn_gap, grid.n, opts.s,
                                       opts.theta, r, opts.m, opts.lambda0,
                                       opts.c2m, opts.margin);
        rec.large_gap = !rec.schedule.small_gap;
        if (rec.large_gap) {
          rec.log_rhs_stab =
              log_large_gap_bound(rec.schedule.log_delta, opts.m, opts.theta,
                                  rec.schedule.log_gap, opts.log_c);
        } else {
          const double rhs = stability_rhs(omega, rec.dn_gap, rec.schedule,
                                           1.0, opts.ln_cap);
          rec.log_rhs_stab = opts.log_c + std::log(rhs);
        }
        rec.rhs_stab = std::exp(rec.log_rhs_stab);

        if (rec.dn_gap > 0.0 && rec.hminus1 > 0.0) {
          lg.push_back(std::log(rec.dn_gap));
          lh.push_back(std::log(rec.hminus1));
        }
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
      out.records.push_back(std::move(rec));
    }
    if (lg.size() >= 2) {
      const LinearFit fit = fit_line(lg, lh);
      out.beta.emplace_back(omega, fit.slope);
    }
  }
  return out;
}

double calibrate_stability_constant(
    const std::vector<StabilityRecord>& train) {
  double log_c = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& r : train) {
    if (!r.ok || r.linfty <= 0.0) continue;
    log_c = std::max(log_c, std::log(r.linfty) - r.log_rhs_stab);
    any = true;
  }
  if (!any)
    throw InvalidArgument(
        "calibrate_stability_constant: no usable training records");
  return log_c;
}

void write_stability_csv(const std::string& path,
                         const std::vector<StabilityRecord>& records) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("write_stability_csv: cannot open " + path);
  f << "pair,omega,dn_gap,hminus1,linfty,regime,log_rhs_stab,rho,lambda,"
       "log_delta,ok,error\n";
  for (const auto& r : records) {
    f << r.pair_name << ',' << fmt(r.omega) << ',' << fmt(r.dn_gap) << ','
      << fmt(r.hminus1) << ',' << fmt(r.linfty) << ','
      << (r.large_gap ? "large_gap" : "small_gap") << ','
      << fmt(r.log_rhs_stab) << ',' << fmt(r.schedule.rho) << ','
      << fmt(r.schedule.lambda) << ',' << fmt(r.schedule.log_delta) << ','
      << (r.ok ? "1" : "0") << ',' << r.error << '\n';
  }
}

void write_beta_csv(const std::string& path,
                    const std::vector<std::pair<double, double>>& beta) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("write_beta_csv: cannot open " + path);
  f << "omega,beta\n";
  for (const auto& [omega, b] : beta)
    f << fmt(omega) << ',' << fmt(b) << '\n';
}

void write_sweep_svg(const std::string& path,
                     const std::vector<StabilityRecord>& records) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("write_sweep_svg: cannot open " + path);

  std::vector<const StabilityRecord*> pts;
  for (const auto& r : records)
    if (r.ok && r.dn_gap > 0.0 && r.hminus1 > 0.0) pts.push_back(&r);

  const int w = 640, h = 480, ml = 70, mr = 20, mt = 20, mb = 50;
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\">\n";
  f << "<rect width=\"" << w << "\" height=\"" << h
    << "\" fill=\"white\"/>\n";

  if (!pts.empty()) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto* r : pts) {
      x0 = std::min(x0, std::log10(r->dn_gap));
      x1 = std::max(x1, std::log10(r->dn_gap));
      y0 = std::min(y0, std::log10(r->hminus1));
      y1 = std::max(y1, std::log10(r->hminus1));
    }
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
    const auto px = [&](double lx) {
      return ml + (lx - x0) / (x1 - x0) * (w - ml - mr);
    };
    const auto py = [&](double ly) {
      return h - mb - (ly - y0) / (y1 - y0) * (h - mt - mb);
    };
    static const char* palette[] = {"#1b6ca8", "#c0392b", "#27ae60",
                                    "#8e44ad", "#d68910", "#16a085"};
    std::vector<double> omegas;
    for (const auto* r : pts)
      if (std::find(omegas.begin(), omegas.end(), r->omega) == omegas.end())
        omegas.push_back(r->omega);
    std::sort(omegas.begin(), omegas.end());

    char buf[256];
    for (const auto* r : pts) {
      const std::size_t oi =
          std::find(omegas.begin(), omegas.end(), r->omega) - omegas.begin();
      std::snprintf(buf, sizeof buf,
                    "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\"/>\n",
                    px(std::log10(r->dn_gap)), py(std::log10(r->hminus1)),
                    palette[oi % 6]);
      f << buf;
    }
    for (std::size_t i = 0; i < omegas.size(); ++i) {
      std::snprintf(buf, sizeof buf,
                    "<circle cx=\"%d\" cy=\"%d\" r=\"4\" fill=\"%s\"/>"
                    "<text x=\"%d\" y=\"%d\" font-size=\"12\">omega = %g"
                    "</text>\n",
                    w - 130, mt + 14 + 18 * static_cast<int>(i),
                    palette[i % 6], w - 120,
                    mt + 18 + 18 * static_cast<int>(i), omegas[i]);
      f << buf;
    }
    char axes[512];
    std::snprintf(axes, sizeof axes,
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" "
                  "stroke=\"black\"/>\n"
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" "
                  "stroke=\"black\"/>\n"
                  "<text x=\"%d\" y=\"%d\" font-size=\"12\">log10 dn_gap "
                  "[%.3g, %.3g]</text>\n"
                  "<text x=\"14\" y=\"%d\" font-size=\"12\" "
                  "transform=\"rotate(-90 14 %d)\">log10 hminus1 [%.3g, "
                  "%.3g]</text>\n",
                  ml, h - mb, w - mr, h - mb, ml, mt, ml, h - mb, ml + 120,
                  h - 16, x0, x1, h / 2, h / 2, y0, y1);
    f << axes;
  }
  f << "</svg>\n";
}

}  // namespace istab
