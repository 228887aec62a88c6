#pragma once

#include <vector>

#include "istab/core.hpp"
#include "istab/potential.hpp"

namespace istab {

/// Periodic box (centered at the origin) with an N^n lattice and FFT-based
/// Sobolev calculus. All discrete norms are Parseval-weighted so they
/// approximate the continuum integrals.
class PeriodicBox {
 public:
  using Field = std::vector<Complex>;

  PeriodicBox(int n, double side, int npts);

  int n = 3;
  double side = 2.0;
  int npts = 32;
  Vec3 origin = Vec3::Zero();

  std::size_t size() const { return size_; }
  double spacing() const { return side / npts; }
  double cell_volume() const;

  std::size_t flat(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny_ + j) * npts + i;
  }
  Vec3 point(std::size_t idx) const;
  /// Wavenumber 2*pi*m/side with m the signed integer frequency.
  Vec3 wavenumber(std::size_t idx) const;

  Field fft(const Field& f) const;   // unnormalized forward transform
  Field ifft(const Field& f) const;  // inverse with 1/N^n normalization

  double l2_norm(const Field& f) const;
  /// Discrete H^s norm: ||(1+|k|^2)^{s/2} fhat||, Parseval-normalized.
  double sobolev_norm(const Field& f, double s) const;
  double sobolev_norm_hat(const Field& fhat, double s) const;

 private:
  std::size_t size_ = 0;
  int ny_ = 1, nz_ = 1;
};

/// Samples the zero-extended potential on the box lattice.
PeriodicBox::Field sample_zero_extended(const PeriodicBox& box,
                                        const PotentialField& q);

/// Canonical admissibility norm: H^s on the periodic box of side 2R.
double potential_sobolev_norm(const PotentialField& q, double s,
                              int npts_hint = 0);

bool is_admissible(const PotentialField& q);

}  // namespace istab
