#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "istab/core.hpp"

namespace istab {

enum class Shape { Box, Ball };

/// Geometric description of the computational domain. For a box,
/// `half_widths` must be integer multiples of `h`; for a ball, `radius`
/// is used and `h < radius/4` is required.
struct GridSpec {
  int n = 3;  // space dimension, 2 or 3
  Shape shape = Shape::Box;
  Vec3 center = Vec3::Zero();
  Vec3 half_widths = Vec3(0.5, 0.5, 0.5);
  double radius = 0.5;
  double h = 0.0;

  std::vector<std::uint64_t> fingerprint() const;
  std::uint64_t hash() const;
};

struct BoundaryFace {
  Vec3 center = Vec3::Zero();
  double ds = 0.0;       // quadrature weight (area element)
  Vec3 normal = Vec3::Zero();  // outward unit normal (analytic for balls)
  int axis = 0;          // lattice orientation of the face
  int sign = +1;         // +1 if the outward lattice direction is +axis
};

/// Finite-difference discretization of the domain: a vertex lattice with
/// interior unknowns and a tiling of the boundary by cell faces.
class DomainGrid {
 public:
  GridSpec spec;
  double h = 0.0;
  int n = 3;
  double enclosing_radius = 1.0;  // R with the domain inside B(0, R), R >= 1

  // Vertex lattice. origin is vertex (0,0,0); dims counts vertices per axis
  // (third component is 1 when n == 2).
  Vec3 origin = Vec3::Zero();
  Eigen::Vector3i dims = Eigen::Vector3i::Ones();

  std::vector<int> interior_id;                  // flat vertex -> id or -1
  std::vector<Eigen::Vector3i> interior_coords;  // id -> lattice coords
  std::vector<BoundaryFace> faces;

  int num_interior() const { return static_cast<int>(interior_coords.size()); }
  int num_faces() const { return static_cast<int>(faces.size()); }

  int vertex_flat(int i, int j, int k) const {
    return (k * dims.y() + j) * dims.x() + i;
  }
  bool vertex_in_lattice(const Eigen::Vector3i& c) const {
    for (int d = 0; d < 3; ++d)
      if (c[d] < 0 || c[d] >= dims[d]) return false;
    return true;
  }
  Vec3 vertex_pos(const Eigen::Vector3i& c) const {
    return origin + h * c.cast<double>();
  }
  /// Interior id of the lattice vertex, or -1.
  int interior_at(const Eigen::Vector3i& c) const {
    if (!vertex_in_lattice(c)) return -1;
    return interior_id[vertex_flat(c.x(), c.y(), c.z())];
  }

  /// Face id whose center is at `p` (points snap to the h/2 sub-lattice),
  /// or -1 if no boundary face sits there.
  int find_face(const Vec3& p) const;

  double boundary_measure() const;

  std::uint64_t hash() const;

 private:
  friend DomainGrid build_grid(const GridSpec& spec);
  std::unordered_map<std::uint64_t, int> face_lookup_;
  std::uint64_t quantize_key(const Vec3& p) const;
};

DomainGrid build_grid(const GridSpec& spec);

/// Direction-dependent boundary partition: plus = {alpha . nu > 0},
/// plus_eps = {alpha . nu > epsilon}, with minus / minus_eps the complements.
struct BoundaryPartition {
  Vec3 alpha = Vec3::UnitX();
  double epsilon = 0.0;
  std::vector<int> plus, minus, plus_eps, minus_eps;
  std::vector<char> in_minus_eps;  // per-face flag, same order as grid.faces

  double measure(const DomainGrid& grid, const std::vector<int>& set) const;
};

BoundaryPartition partition_boundary(const DomainGrid& grid, const Vec3& alpha,
                                     double epsilon);

}  // namespace istab
