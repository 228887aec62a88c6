#include "istab/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>

namespace istab {

namespace {
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

PeriodicBox::PeriodicBox(int n_, double side_, int npts_)
    : n(n_), side(side_), npts(npts_) {
  if (n != 2 && n != 3) throw InvalidArgument("PeriodicBox: n must be 2 or 3");
  if (npts < 4) throw InvalidArgument("PeriodicBox: npts too small");
  if (side <= 0.0) throw InvalidArgument("PeriodicBox: side must be > 0");
  ny_ = npts;
  nz_ = (n == 3) ? npts : 1;
  size_ = static_cast<std::size_t>(npts) * ny_ * nz_;
  origin = Vec3::Zero();
  for (int d = 0; d < n; ++d) origin[d] = -side / 2.0;
}

double PeriodicBox::cell_volume() const {
  double v = 1.0;
  for (int d = 0; d < n; ++d) v *= spacing();
  return v;
}

Vec3 PeriodicBox::point(std::size_t idx) const {
  const int i = static_cast<int>(idx % npts);
  const int j = static_cast<int>((idx / npts) % ny_);
  const int k = static_cast<int>(idx / (static_cast<std::size_t>(npts) * ny_));
  Vec3 p = origin;
  p.x() += i * spacing();
  p.y() += j * spacing();
  if (n == 3) p.z() += k * spacing();
  return p;
}

Vec3 PeriodicBox::wavenumber(std::size_t idx) const {
  const int i = static_cast<int>(idx % npts);
  const int j = static_cast<int>((idx / npts) % ny_);
  const int k = static_cast<int>(idx / (static_cast<std::size_t>(npts) * ny_));
  const auto signedfreq = [this](int m) {
    return (m <= npts / 2) ? m : m - npts;
  };
  Vec3 w = Vec3::Zero();
  const double f = 2.0 * M_PI / side;
  w.x() = f * signedfreq(i);
  w.y() = f * signedfreq(j);
  if (n == 3) w.z() = f * signedfreq(k);
  return w;
}

PeriodicBox::Field PeriodicBox::fft(const Field& f) const {
  if (f.size() != size_) throw InvalidArgument("fft: field size mismatch");
  Field out(size_);
  Field in(f);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_plan plan;
    auto* pin = reinterpret_cast<fftw_complex*>(in.data());
    auto* pout = reinterpret_cast<fftw_complex*>(out.data());
    if (n == 3)
      plan = fftw_plan_dft_3d(nz_, ny_, npts, pin, pout, FFTW_FORWARD,
                              FFTW_ESTIMATE);
    else
      plan = fftw_plan_dft_2d(ny_, npts, pin, pout, FFTW_FORWARD,
                              FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  return out;
}

PeriodicBox::Field PeriodicBox::ifft(const Field& f) const {
  if (f.size() != size_) throw InvalidArgument("ifft: field size mismatch");
  Field out(size_);
  Field in(f);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_plan plan;
    auto* pin = reinterpret_cast<fftw_complex*>(in.data());
    auto* pout = reinterpret_cast<fftw_complex*>(out.data());
    if (n == 3)
      plan = fftw_plan_dft_3d(nz_, ny_, npts, pin, pout, FFTW_BACKWARD,
                              FFTW_ESTIMATE);
    else
      plan = fftw_plan_dft_2d(ny_, npts, pin, pout, FFTW_BACKWARD,
                              FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / static_cast<double>(size_);
  for (auto& v : out) v *= scale;
  return out;
}

double PeriodicBox::l2_norm(const Field& f) const {
  double s = 0.0;
  for (const auto& v : f) s += std::norm(v);
  return std::sqrt(s * cell_volume());
}

double PeriodicBox::sobolev_norm_hat(const Field& fhat, double s) const {
  if (fhat.size() != size_)
    throw InvalidArgument("sobolev_norm_hat: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < size_; ++i) {
    const double k2 = wavenumber(i).squaredNorm();
    acc += std::pow(1.0 + k2, s) * std::norm(fhat[i]);
  }
  // Parseval: sum |f|^2 vol = sum |fhat|^2 vol / N^n.
  return std::sqrt(acc * cell_volume() / static_cast<double>(size_));
}

double PeriodicBox::sobolev_norm(const Field& f, double s) const {
  return sobolev_norm_hat(fft(f), s);
}

PeriodicBox::Field sample_zero_extended(const PeriodicBox& box,
                                        const PotentialField& q) {
  PeriodicBox::Field f(box.size());
  for (std::size_t i = 0; i < box.size(); ++i)
    f[i] = Complex(q.eval(box.point(i)), 0.0);
  return f;
}

double potential_sobolev_norm(const PotentialField& q, double s,
                              int npts_hint) {
  if (!q.grid) throw InvalidArgument("potential_sobolev_norm: no grid");
  const double R = q.grid->enclosing_radius;
  int npts = npts_hint;
  if (npts <= 0) {
    npts = static_cast<int>(std::lround(2.0 * R / q.grid->h));
    npts = std::max(npts, 16);
  }
  PeriodicBox box(q.grid->n, 2.0 * R, npts);
  return box.sobolev_norm(sample_zero_extended(box, q), s);
}

bool is_admissible(const PotentialField& q) {
  return potential_sobolev_norm(q, q.s) <= q.M;
}

}  // namespace istab
