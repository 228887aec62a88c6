#include "istab/dnmap.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

namespace istab {

Eigen::MatrixXcd DNOperator::pairing() const {
  Eigen::MatrixXcd p = matrix;
  for (int i = 0; i < size(); ++i)
    p.row(i) *= grid->faces[i].ds * face_weight[i];
  return p;
}

double DNOperator::symmetry_defect() const {
  const Eigen::MatrixXcd p = pairing();
  const double denom = p.norm();
  if (denom == 0.0) return 0.0;
  return (p - p.transpose()).norm() / denom;
}

Eigen::VectorXcd DNOperator::apply(const Eigen::VectorXcd& f) const {
  if (f.size() != matrix.cols())
    throw InvalidArgument("DNOperator::apply: boundary data size mismatch");
  Eigen::VectorXcd out = matrix * f;
  if (restriction)
    for (int i = 0; i < size(); ++i)
      if (!restriction->in_minus_eps[i]) out[i] = 0.0;
  return out;
}

DNOperator build_dn(const DomainGrid& grid, const PotentialField& q,
                    double omega, bool check_assumptions, int jobs) {
  DNOperator dn;
  dn.grid = &grid;
  dn.q_id = q.hash();
  dn.omega = omega;

  if (check_assumptions) {
    const auto fc = dirichlet_spectrum_check(grid, q, omega);
    if (!fc.passes()) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "build_dn: assumption %s violated (q_id=%016" PRIx64
                    ", omega=%.6g, dist=%.3g)",
                    fc.passes_A ? "(B)" : "(A)", dn.q_id, omega,
                    fc.dist_to_spectrum);
      throw AssumptionError(buf);
    }
  }

  DirichletSolver solver(grid, q, omega);
  dn.face_weight = solver.system().face_weight;
  const int nf = grid.num_faces();
  dn.matrix.resize(nf, nf);

  const auto run_columns = [&](int begin, int end) {
    for (int j = begin; j < end; ++j) {
      Eigen::VectorXd f = Eigen::VectorXd::Zero(nf);
      f[j] = 1.0;
      const Eigen::VectorXd u = solver.solve(f);
      dn.matrix.col(j) = dn_flux_trace(solver.system(), u.cast<Complex>(),
                                       f.cast<Complex>());
    }
  };

  int nthreads = jobs > 0 ? jobs
                          : static_cast<int>(std::max(
                                1u, std::thread::hardware_concurrency()));
  nthreads = std::min(nthreads, nf);
  if (nthreads <= 1) {
    run_columns(0, nf);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (nf + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      const int b = t * chunk, e = std::min(nf, b + chunk);
      if (b < e) pool.emplace_back(run_columns, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return dn;
}

DNOperator restrict_partial(const DNOperator& dn, const BoundaryPartition& p) {
  if (static_cast<int>(p.in_minus_eps.size()) != dn.size())
    throw InvalidArgument("restrict_partial: partition built on another grid");
  DNOperator out = dn;
  out.restriction = p;
  for (int i = 0; i < out.size(); ++i)
    if (!p.in_minus_eps[i]) out.matrix.row(i).setZero();
  return out;
}

BoundaryNormCalculus::BoundaryNormCalculus(const DomainGrid& grid)
    : grid_(&grid) {
  const int nf = grid.num_faces();
  const double h = grid.h;
  lap_ = Eigen::MatrixXd::Zero(nf, nf);
  for (int i = 0; i < nf; ++i)
    for (int j = i + 1; j < nf; ++j) {
      const double d = (grid.faces[i].center - grid.faces[j].center).norm();
      if (d > 1e-12 * h &&
          d <= 1.01 * h) {  // edge-sharing neighbors (same or adjacent plane)
        lap_(i, j) = lap_(j, i) = -1.0 / (h * h);
        lap_(i, i) += 1.0 / (h * h);
        lap_(j, j) += 1.0 / (h * h);
      }
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap_);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("BoundaryNormCalculus: eigendecomposition failed");
  evals_ = es.eigenvalues().cwiseMax(0.0);
  evecs_ = es.eigenvectors();
}

const Eigen::MatrixXd& BoundaryNormCalculus::fractional_power(double t) const {
  auto it = powers_.find(t);
  if (it != powers_.end()) return it->second;
  const Eigen::VectorXd d =
      (evals_.array() + 1.0).pow(t).matrix();
  Eigen::MatrixXd p = evecs_ * d.asDiagonal() * evecs_.transpose();
  return powers_.emplace(t, std::move(p)).first->second;
}

double BoundaryNormCalculus::reconstruction_error() const {
  const Eigen::MatrixXd& half = fractional_power(0.5);
  const int nf = static_cast<int>(lap_.rows());
  const Eigen::MatrixXd full =
      lap_ + Eigen::MatrixXd::Identity(nf, nf);
  return (half * half - full).norm() / full.norm();
}

double BoundaryNormCalculus::operator_norm_fractional(
    const Eigen::MatrixXcd& a, const std::vector<char>& row_mask) const {
  const int nf = static_cast<int>(lap_.rows());
  if (a.rows() != nf || a.cols() != nf)
    throw InvalidArgument("operator_norm_fractional: size mismatch");
  if (!row_mask.empty() && static_cast<int>(row_mask.size()) != nf)
    throw InvalidArgument("operator_norm_fractional: mask size mismatch");
  if (a.norm() == 0.0) return 0.0;

  const Eigen::MatrixXd& fquarter = fractional_power(0.25);
  const Eigen::MatrixXd& finv34 = fractional_power(-0.75);
  const auto mask = [&](Eigen::VectorXcd& v) {
    if (row_mask.empty()) return;
    for (int i = 0; i < nf; ++i)
      if (!row_mask[i]) v[i] = 0.0;
  };
  // The projector acts after the H^{1/2}-smoothing power: restricting to a
  // smaller face set then never increases the norm (exactly), which the
  // P-before-smoothing ordering does not guarantee since P and (I+L)^{1/4}
  // do not commute.
  const auto forward = [&](const Eigen::VectorXcd& v) {
    Eigen::VectorXcd t = fquarter * (a * (finv34 * v).eval()).eval();
    mask(t);
    return t;
  };
  const auto adjoint = [&](const Eigen::VectorXcd& w) {
    Eigen::VectorXcd t = w;
    mask(t);
    return Eigen::VectorXcd(finv34 * (a.adjoint() * (fquarter * t).eval()).eval());
  };

  std::mt19937_64 rng(0x0b5e55edULL);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  Eigen::VectorXcd v(nf);
  for (int i = 0; i < nf; ++i) v[i] = Complex(un(rng), un(rng));
  v.normalize();

  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    const Eigen::VectorXcd w = forward(v);
    const double s = w.norm();
    if (s == 0.0) return 0.0;
    Eigen::VectorXcd vn = adjoint(w);
    const double nn = vn.norm();
    if (nn == 0.0) return s;
    v = vn / nn;
    if (std::abs(s - sigma) <= 1e-6 * std::max(s, 1e-300)) return s;
    sigma = s;
  }
  throw ConvergenceError(
      "operator_norm_fractional: power iteration did not converge");
}

double dn_gap(const DNOperator& a, const DNOperator& b,
              const BoundaryPartition& part, const BoundaryNormCalculus& calc) {
  if (a.grid != b.grid || a.size() != b.size())
    throw InvalidArgument("dn_gap: operators live on different grids");
  if (&calc.grid() != a.grid)
    throw InvalidArgument("dn_gap: calculus built on another grid");
  const Eigen::MatrixXcd diff = a.matrix - b.matrix;
  return calc.operator_norm_fractional(diff, part.in_minus_eps);
}

namespace {
constexpr std::uint32_t kDnMagic = 0x444e4f50u;  // "DNOP"
constexpr std::uint32_t kDnVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void save_dn_operator(const std::string& path, const DNOperator& dn) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidArgument("save_dn_operator: cannot open " + path);
  put(os, kDnMagic);
  put(os, kDnVersion);
  put(os, dn.grid->hash());
  put(os, dn.q_id);
  put(os, dn.omega);
  put(os, static_cast<std::uint32_t>(dn.size()));
  const std::uint8_t has_r = dn.restriction ? 1 : 0;
  put(os, has_r);
  if (dn.restriction) {
    for (int d = 0; d < 3; ++d) put(os, dn.restriction->alpha[d]);
    put(os, dn.restriction->epsilon);
  }
  std::uint64_t chk = fnv1a(nullptr, 0);
  const auto write_doubles = [&](const double* p, std::size_t count) {
    os.write(reinterpret_cast<const char*>(p),
             static_cast<std::streamsize>(count * sizeof(double)));
    chk = hash_doubles(p, count, chk);
  };
  write_doubles(dn.face_weight.data(),
                static_cast<std::size_t>(dn.face_weight.size()));
  write_doubles(reinterpret_cast<const double*>(dn.matrix.data()),
                static_cast<std::size_t>(dn.matrix.size()) * 2);
  put(os, chk);
  if (!os) throw std::runtime_error("save_dn_operator: write failed");
}

DNOperator load_dn_operator(const std::string& path, const DomainGrid& grid) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("load_dn_operator: cannot open " + path);
  if (get<std::uint32_t>(is) != kDnMagic)
    throw InvalidArgument("load_dn_operator: bad magic");
  if (get<std::uint32_t>(is) != kDnVersion)
    throw InvalidArgument("load_dn_operator: unsupported version");
  DNOperator dn;
  dn.grid = &grid;
  const auto ghash = get<std::uint64_t>(is);
  if (ghash != grid.hash())
    throw InvalidArgument("load_dn_operator: grid mismatch");
  dn.q_id = get<std::uint64_t>(is);
  dn.omega = get<double>(is);
  const auto nf = static_cast<int>(get<std::uint32_t>(is));
  if (nf != grid.num_faces())
    throw InvalidArgument("load_dn_operator: face count mismatch");
  const auto has_r = get<std::uint8_t>(is);
  std::optional<std::pair<Vec3, double>> rinfo;
  if (has_r) {
    Vec3 alpha;
    for (int d = 0; d < 3; ++d) alpha[d] = get<double>(is);
    rinfo = {alpha, get<double>(is)};
  }
  std::uint64_t chk = fnv1a(nullptr, 0);
  dn.face_weight.resize(nf);
  is.read(reinterpret_cast<char*>(dn.face_weight.data()),
          static_cast<std::streamsize>(nf * sizeof(double)));
  chk = hash_doubles(dn.face_weight.data(), static_cast<std::size_t>(nf), chk);
  dn.matrix.resize(nf, nf);
  is.read(reinterpret_cast<char*>(dn.matrix.data()),
          static_cast<std::streamsize>(static_cast<std::size_t>(nf) * nf *
                                       sizeof(Complex)));
  chk = hash_doubles(reinterpret_cast<const double*>(dn.matrix.data()),
                     static_cast<std::size_t>(nf) * nf * 2, chk);
  const auto stored = get<std::uint64_t>(is);
  if (!is || stored != chk)
    throw std::runtime_error("load_dn_operator: checksum mismatch");
  if (rinfo)
    dn.restriction = partition_boundary(grid, rinfo->first, rinfo->second);
  return dn;
}

void write_dn_csv(const std::string& path, const DNOperator& dn) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InvalidArgument("write_dn_csv: cannot open " + path);
  os << "row,col,re,im\n";
  char buf[96];
  for (int j = 0; j < dn.size(); ++j)
    for (int i = 0; i < dn.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", i, j,
                    dn.matrix(i, j).real(), dn.matrix(i, j).imag());
      os << buf;
    }
}

}  // namespace istab
