#include "istab/potential.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace istab {

std::uint64_t PotentialField::hash() const {
  std::uint64_t h = grid ? grid->hash() : 0;
  h = hash_doubles(values.data(), static_cast<std::size_t>(values.size()), h);
  const double meta[2] = {static_cast<double>(s), M};
  return hash_doubles(meta, 2, h);
}

bool point_inside(const GridSpec& spec, const Vec3& x) {
  if (spec.shape == Shape::Box) {
    for (int d = 0; d < spec.n; ++d)
      if (std::abs(x[d] - spec.center[d]) >= spec.half_widths[d]) return false;
    return true;
  }
  Vec3 r = x - spec.center;
  if (spec.n == 2) r.z() = 0.0;
  return r.norm() < spec.radius;
}

PotentialField make_potential(const DomainGrid& grid,
                              std::function<double(const Vec3&)> f,
                              std::string name, int s, double M) {
  PotentialField q;
  q.grid = &grid;
  q.s = s;
  q.M = M;
  q.name = std::move(name);
  const GridSpec spec = grid.spec;
  q.eval_fn = [f = std::move(f), spec](const Vec3& x) -> double {
    return point_inside(spec, x) ? f(x) : 0.0;
  };
  q.values.resize(grid.num_interior());
  for (int i = 0; i < grid.num_interior(); ++i)
    q.values[i] = q.eval_fn(grid.vertex_pos(grid.interior_coords[i]));
  return q;
}

std::function<double(const Vec3&)> gaussian_bump(const Vec3& center,
                                                 double width, double amp) {
  return [=](const Vec3& x) {
    const double r2 = (x - center).squaredNorm();
    return amp * std::exp(-r2 / (2.0 * width * width));
  };
}

std::function<double(const Vec3&)> windowed_cosine(const GridSpec& spec,
                                                   const Vec3& xi, double amp,
                                                   double phase) {
  return [=](const Vec3& x) {
    double w = 1.0;
    for (int d = 0; d < spec.n; ++d) {
      double t;
      if (spec.shape == Shape::Box)
        t = (x[d] - spec.center[d]) / spec.half_widths[d];
      else
        t = (x[d] - spec.center[d]) / spec.radius;
      if (std::abs(t) >= 1.0) return 0.0;
      const double c = std::cos(0.5 * M_PI * t);
      w *= c * c;
    }
    return amp * w * std::cos(xi.dot(x) + phase);
  };
}

std::function<double(const Vec3&)> constant_potential(double c) {
  return [c](const Vec3&) { return c; };
}

std::function<double(const Vec3&)> add(std::function<double(const Vec3&)> a,
                                       std::function<double(const Vec3&)> b) {
  return [a = std::move(a), b = std::move(b)](const Vec3& x) {
    return a(x) + b(x);
  };
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_field_header(std::ofstream& os, const GridSpec& spec,
                        std::size_t count, int columns) {
  os << "istab-field 1\n";
  os << "n " << spec.n << '\n';
  os << "shape " << (spec.shape == Shape::Box ? "box" : "ball") << '\n';
  os << "h " << fmt17(spec.h) << '\n';
  os << "center " << fmt17(spec.center.x()) << ' ' << fmt17(spec.center.y())
     << ' ' << fmt17(spec.center.z()) << '\n';
  if (spec.shape == Shape::Box)
    os << "half_widths " << fmt17(spec.half_widths.x()) << ' '
       << fmt17(spec.half_widths.y()) << ' ' << fmt17(spec.half_widths.z())
       << '\n';
  else
    os << "radius " << fmt17(spec.radius) << '\n';
  os << "count " << count << '\n';
  os << "columns " << columns << '\n';
}

}  // namespace

void write_grid_field(const std::string& path, const GridSpec& spec,
                      const Eigen::VectorXd& values) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("write_grid_field: cannot open " + path);
  write_field_header(os, spec, static_cast<std::size_t>(values.size()), 1);
  for (Eigen::Index i = 0; i < values.size(); ++i)
    os << i << ' ' << fmt17(values[i]) << '\n';
  if (!os) throw std::runtime_error("write_grid_field: write failed");
}

void write_grid_field(const std::string& path, const GridSpec& spec,
                      const Eigen::VectorXcd& values) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("write_grid_field: cannot open " + path);
  write_field_header(os, spec, static_cast<std::size_t>(values.size()), 2);
  for (Eigen::Index i = 0; i < values.size(); ++i)
    os << i << ' ' << fmt17(values[i].real()) << ' ' << fmt17(values[i].imag())
       << '\n';
  if (!os) throw std::runtime_error("write_grid_field: write failed");
}

Eigen::VectorXcd load_grid_field(const std::string& path, GridSpec* spec_out) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("load_grid_field: cannot open " + path);
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "istab-field" || version != 1)
    throw InvalidArgument("load_grid_field: bad header in " + path);
  GridSpec spec;
  std::size_t count = 0;
  int columns = 0;
  std::string key;
  while (is >> key) {
    if (key == "n") {
      is >> spec.n;
    } else if (key == "shape") {
      std::string s;
      is >> s;
      if (s == "box")
        spec.shape = Shape::Box;
      else if (s == "ball")
        spec.shape = Shape::Ball;
      else
        throw InvalidArgument("load_grid_field: unknown shape " + s);
    } else if (key == "h") {
      is >> spec.h;
    } else if (key == "center") {
      is >> spec.center.x() >> spec.center.y() >> spec.center.z();
    } else if (key == "half_widths") {
      is >> spec.half_widths.x() >> spec.half_widths.y() >>
          spec.half_widths.z();
    } else if (key == "radius") {
      is >> spec.radius;
    } else if (key == "count") {
      is >> count;
    } else if (key == "columns") {
      is >> columns;
      break;  // body follows
    } else {
      throw InvalidArgument("load_grid_field: unknown header key " + key);
    }
    if (!is) throw InvalidArgument("load_grid_field: malformed header");
  }
  if (columns != 1 && columns != 2)
    throw InvalidArgument("load_grid_field: columns must be 1 or 2");
  Eigen::VectorXcd values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t idx = 0;
    double re = 0.0, im = 0.0;
    is >> idx >> re;
    if (columns == 2) is >> im;
    if (!is || idx != i)
      throw InvalidArgument("load_grid_field: malformed body at row " +
                            std::to_string(i));
    values[static_cast<Eigen::Index>(i)] = Complex(re, im);
  }
  if (spec_out) *spec_out = spec;
  return values;
}

PotentialField load_potential_field(const std::string& path,
                                    const DomainGrid& grid, int s, double M) {
  GridSpec spec;
  const Eigen::VectorXcd raw = load_grid_field(path, &spec);
  const GridSpec& g = grid.spec;
  const bool match =
      spec.n == g.n && spec.shape == g.shape &&
      std::abs(spec.h - g.h) < 1e-12 &&
      (spec.center - g.center).norm() < 1e-12 &&
      (g.shape == Shape::Box
           ? (spec.half_widths - g.half_widths).norm() < 1e-12
           : std::abs(spec.radius - g.radius) < 1e-12);
  if (!match)
    throw InvalidArgument("load_potential_field: header does not match grid");
  if (raw.size() != grid.num_interior())
    throw InvalidArgument(
        "load_potential_field: count does not match interior nodes");

  PotentialField q;
  q.grid = &grid;
  q.s = s;
  q.M = M;
  q.name = path;
  q.values = raw.real();
  const DomainGrid* gp = &grid;
  Eigen::VectorXd vals = q.values;
  q.eval_fn = [gp, vals = std::move(vals)](const Vec3& x) -> double {
    Eigen::Vector3i c;
    for (int d = 0; d < 3; ++d)
      c[d] = static_cast<int>(std::lround((x[d] - gp->origin[d]) / gp->h));
    const int id = gp->interior_at(c);
    return id >= 0 ? vals[id] : 0.0;
  };
  return q;
}

}  // namespace istab
