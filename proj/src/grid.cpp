#include "istab/grid.hpp"

#include <cmath>
#include <cstring>

namespace istab {

namespace {

constexpr double kTol = 1e-9;

bool nearly_divides(double h, double len) {
  const double q = len / h;
  return std::abs(q - std::round(q)) < 1e-9 * std::max(1.0, q);
}

}  // namespace

std::vector<std::uint64_t> GridSpec::fingerprint() const {
  std::vector<double> v = {static_cast<double>(n),
                           shape == Shape::Box ? 0.0 : 1.0,
                           center.x(), center.y(), center.z(),
                           half_widths.x(), half_widths.y(), half_widths.z(),
                           radius, h};
  std::vector<std::uint64_t> out(v.size());
  std::memcpy(out.data(), v.data(), v.size() * sizeof(double));
  return out;
}

std::uint64_t GridSpec::hash() const {
  auto fp = fingerprint();
  return fnv1a(fp.data(), fp.size() * sizeof(std::uint64_t));
}

std::uint64_t DomainGrid::quantize_key(const Vec3& p) const {
  // Face centers and vertices live on the h/2 sub-lattice anchored at origin.
  std::int64_t q[3];
  for (int d = 0; d < 3; ++d) {
    const double t = (p[d] - origin[d]) / (h / 2.0);
    q[d] = static_cast<std::int64_t>(std::llround(t));
    if (std::abs(t - static_cast<double>(q[d])) > 1e-6)
      return ~0ull;  // off-lattice point
  }
  return fnv1a(q, sizeof(q));
}

int DomainGrid::find_face(const Vec3& p) const {
  const auto key = quantize_key(p);
  auto it = face_lookup_.find(key);
  if (it == face_lookup_.end()) return -1;
  // Guard against hash collisions.
  if ((faces[it->second].center - p).norm() > h * 1e-6) return -1;
  return it->second;
}

double DomainGrid::boundary_measure() const {
  double s = 0.0;
  for (const auto& f : faces) s += f.ds;
  return s;
}

std::uint64_t DomainGrid::hash() const { return spec.hash(); }

DomainGrid build_grid(const GridSpec& spec) {
  if (spec.h <= 0.0) throw InvalidArgument("build_grid: h must be > 0");
  if (spec.n != 2 && spec.n != 3)
    throw InvalidArgument("build_grid: dimension must be 2 or 3");
  if (spec.shape == Shape::Box) {
    for (int d = 0; d < spec.n; ++d) {
      if (spec.half_widths[d] <= 0.0)
        throw InvalidArgument("build_grid: box half-widths must be > 0");
      if (!nearly_divides(spec.h, 2.0 * spec.half_widths[d]))
        throw InvalidArgument("build_grid: h must divide the box side length");
    }
  } else {
    if (spec.radius <= 0.0)
      throw InvalidArgument("build_grid: ball radius must be > 0");
    if (spec.h >= spec.radius / 4.0)
      throw InvalidArgument("build_grid: need h < radius/4 for a ball");
  }

  DomainGrid g;
  g.spec = spec;
  g.h = spec.h;
  g.n = spec.n;

  // Cell lattice bounding the domain. Cells are h-cubes; cell (i,j,k) spans
  // [origin + i*h, origin + (i+1)*h] per axis.
  Eigen::Vector3i cells = Eigen::Vector3i::Ones();
  if (spec.shape == Shape::Box) {
    g.origin = spec.center - spec.half_widths;
    if (spec.n == 2) g.origin.z() = 0.0;
    for (int d = 0; d < spec.n; ++d)
      cells[d] = static_cast<int>(std::llround(2.0 * spec.half_widths[d] / spec.h));
  } else {
    const int m = static_cast<int>(std::ceil(spec.radius / spec.h)) + 1;
    for (int d = 0; d < spec.n; ++d) {
      cells[d] = 2 * m;
      g.origin[d] = spec.center[d] - m * spec.h;
    }
    if (spec.n == 2) g.origin.z() = 0.0;
  }

  const auto cell_inside = [&](const Eigen::Vector3i& c) -> bool {
    for (int d = 0; d < spec.n; ++d)
      if (c[d] < 0 || c[d] >= cells[d]) return false;
    if (spec.n == 2 && c.z() != 0) return false;
    if (spec.shape == Shape::Box) return true;
    Vec3 cc = g.origin + spec.h * (c.cast<double>() + Vec3::Constant(0.5) * 1.0);
    if (spec.n == 2) cc.z() = spec.center.z();
    return (cc - spec.center).head(spec.n == 2 ? 2 : 3).norm() < spec.radius;
  };

  g.dims = cells + Eigen::Vector3i::Ones();
  if (spec.n == 2) g.dims.z() = 1;

  // Interior vertices: all surrounding cells inside the domain.
  g.interior_id.assign(static_cast<std::size_t>(g.dims.x()) * g.dims.y() * g.dims.z(), -1);
  for (int k = 0; k < g.dims.z(); ++k)
    for (int j = 0; j < g.dims.y(); ++j)
      for (int i = 0; i < g.dims.x(); ++i) {
        bool interior = true;
        const int kzlo = (spec.n == 2) ? 0 : -1, kzhi = (spec.n == 2) ? 0 : 0;
        for (int dk = kzlo; dk <= kzhi && interior; ++dk)
          for (int dj = -1; dj <= 0 && interior; ++dj)
            for (int di = -1; di <= 0 && interior; ++di)
              if (!cell_inside({i + di, j + dj, k + dk})) interior = false;
        if (interior) {
          g.interior_id[g.vertex_flat(i, j, k)] =
              static_cast<int>(g.interior_coords.size());
          g.interior_coords.push_back({i, j, k});
        }
      }

  // Boundary faces: inside cell next to an outside cell.
  const double area = (spec.n == 3) ? spec.h * spec.h : spec.h;
  for (int k = 0; k < cells.z(); ++k)
    for (int j = 0; j < cells.y(); ++j)
      for (int i = 0; i < cells.x(); ++i) {
        const Eigen::Vector3i c{i, j, k};
        if (spec.n == 2 && k != 0) continue;
        if (!cell_inside(c)) continue;
        for (int axis = 0; axis < spec.n; ++axis)
          for (int sgn = -1; sgn <= 1; sgn += 2) {
            Eigen::Vector3i nb = c;
            nb[axis] += sgn;
            if (cell_inside(nb)) continue;
            BoundaryFace f;
            f.axis = axis;
            f.sign = sgn;
            Vec3 cc = g.origin + spec.h * (c.cast<double>() + Vec3::Constant(0.5));
            if (spec.n == 2) cc.z() = 0.0;
            cc[axis] += sgn * spec.h / 2.0;
            f.center = cc;
            Vec3 axis_normal = Vec3::Zero();
            axis_normal[axis] = static_cast<double>(sgn);
            if (spec.shape == Shape::Box) {
              f.normal = axis_normal;
              f.ds = area;
            } else {
              Vec3 r = f.center - spec.center;
              if (spec.n == 2) r.z() = 0.0;
              f.normal = r.normalized();
              // Project the staircase face onto the sphere: the cosine between
              // the lattice normal and the analytic normal is the area ratio.
              const double cosang = std::abs(f.normal.dot(axis_normal));
              f.ds = area * std::max(cosang, 1e-3);
            }
            g.faces.push_back(f);
          }
      }

  // R >= 1 and the whole boundary inside B(0, R).
  double rmax = 1.0;
  for (const auto& f : g.faces) rmax = std::max(rmax, f.center.norm());
  g.enclosing_radius = rmax;

  for (int fi = 0; fi < g.num_faces(); ++fi)
    g.face_lookup_[g.quantize_key(g.faces[fi].center)] = fi;

  for (const auto& f : g.faces)
    if (std::abs(f.normal.norm() - 1.0) > 1e-12)
      throw std::logic_error("build_grid: non-unit face normal");

  return g;
}

double BoundaryPartition::measure(const DomainGrid& grid,
                                  const std::vector<int>& set) const {
  double s = 0.0;
  for (int f : set) s += grid.faces[f].ds;
  return s;
}

BoundaryPartition partition_boundary(const DomainGrid& grid, const Vec3& alpha,
                                     double epsilon) {
  if (std::abs(alpha.norm() - 1.0) > 1e-12)
    throw InvalidArgument("partition_boundary: alpha must be a unit vector");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidArgument("partition_boundary: epsilon must lie in (0,1)");

  BoundaryPartition p;
  p.alpha = alpha;
  p.epsilon = epsilon;
  p.in_minus_eps.assign(grid.faces.size(), 0);
  for (int fi = 0; fi < grid.num_faces(); ++fi) {
    const double an = alpha.dot(grid.faces[fi].normal);
    if (an > 0.0)
      p.plus.push_back(fi);
    else
      p.minus.push_back(fi);
    if (an > epsilon) {
      p.plus_eps.push_back(fi);
    } else {
      p.minus_eps.push_back(fi);
      p.in_minus_eps[fi] = 1;
    }
  }
  return p;
}

}  // namespace istab
