#ifndef SHAPEGRASP_MESH_HPP
#define SHAPEGRASP_MESH_HPP

#include "shapegrasp/common.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace shapegrasp {

/// Triangles with area below this are treated as degenerate.
inline constexpr double kDegenerateArea = 1e-12;

/// Indexed triangle surface. Construction validates indices and coordinates
/// and caches per-triangle areas; the mesh is immutable afterwards.
class TriangleMesh {
 public:
  TriangleMesh() = default;
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Vec3i> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Vec3i>& triangles() const { return triangles_; }
  const std::vector<double>& areas() const { return areas_; }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t triangle_count() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

  const Vec3& corner(std::size_t tri, int k) const {
    return vertices_[static_cast<std::size_t>(triangles_[tri][k])];
  }
  Vec3 normal(std::size_t tri) const;  // unit, right-hand winding
  double total_area() const;
  Eigen::AlignedBox3d bounds() const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Vec3i> triangles_;
  std::vector<double> areas_;
};

/// p -> scale .* (p + translation). Scale is per-axis; uniform in the usual
/// case.
struct RigidScaleTransform {
  Vec3 translation = Vec3::Zero();
  Vec3 scale = Vec3::Ones();

  static RigidScaleTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const {
    return scale.cwiseProduct(p + translation);
  }
  Vec3 apply_inverse(const Vec3& p) const {
    return p.cwiseQuotient(scale) - translation;
  }
  RigidScaleTransform inverse() const;
  /// (this ∘ first)(p) = this(first(p))
  RigidScaleTransform compose(const RigidScaleTransform& first) const;
};

TriangleMesh transformed(const TriangleMesh& mesh,
                         const RigidScaleTransform& t);
TriangleMesh transformed(const TriangleMesh& mesh, const Pose& pose);

enum class MeshFormat { Off, Obj, Ply };

MeshFormat format_from_path(const std::filesystem::path& path);

TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
/// PLY is written as binary little-endian.
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Drops triangles with repeated indices or area < kDegenerateArea and
/// compacts unreferenced vertices.
TriangleMesh remove_degenerate_triangles(const TriangleMesh& mesh);
TriangleMesh compact_vertices(const TriangleMesh& mesh);
/// Merges vertices with identical coordinates (exact equality).
TriangleMesh weld_vertices(const TriangleMesh& mesh);
TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b);

/// Bounding-box center to the origin, longest side to 1.
std::pair<TriangleMesh, RigidScaleTransform> normalize_unit_cube(
    const TriangleMesh& mesh);
RigidScaleTransform unit_cube_transform(std::span<const Vec3> points);

/// Edge-connected component label per triangle, labels ordered by first
/// triangle index.
std::vector<int> triangle_components(const TriangleMesh& mesh);

TriangleMesh remove_small_components(const TriangleMesh& mesh,
                                     double min_triangle_fraction);

struct DecimationResult {
  TriangleMesh mesh;
  /// Set when the target could not be reached without breaking topology.
  bool target_not_reached = false;
};

/// Quadric-error edge collapse. Collapses that would change topology
/// (link condition) or flip a face are rejected, so a closed manifold input
/// stays closed and keeps its Euler characteristic.
DecimationResult decimate(const TriangleMesh& mesh, double target_fraction);

/// Area-weighted uniform surface samples.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n,
                                 std::uint64_t seed);
/// Same, also returning the source triangle of every sample.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n,
                                 std::uint64_t seed,
                                 std::vector<std::size_t>& triangle_of_sample);

/// Every undirected edge is used by exactly two triangles, once in each
/// direction. An empty mesh is not watertight.
bool is_watertight(const TriangleMesh& mesh);

/// V - E + F.
long euler_characteristic(const TriangleMesh& mesh);

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

// Analytic test shapes, all closed and consistently outward-oriented.
TriangleMesh make_box(const Vec3& min_corner, const Vec3& max_corner);
TriangleMesh make_tetrahedron();
TriangleMesh make_uv_sphere(const Vec3& center, double radius, int stacks,
                            int slices);
TriangleMesh make_icosphere(const Vec3& center, double radius,
                            int subdivisions);
TriangleMesh make_torus(double major_radius, double minor_radius, int rings,
                        int sides);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_MESH_HPP
