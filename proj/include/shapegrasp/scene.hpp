#ifndef SHAPEGRASP_SCENE_HPP
#define SHAPEGRASP_SCENE_HPP

#include "shapegrasp/common.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace shapegrasp {

/// Points p with normal . p == offset.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0;
  double tolerance = 0.005;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct RansacParams {
  double tolerance = 0.005;
  int iterations = 1000;
  /// The normal is flipped to face this point. Without it, the normal faces
  /// the side holding more off-plane points.
  std::optional<Vec3> sensor_position;
};

/// Best hypothesis by inlier count (ties go to the earlier iteration), then
/// a least-squares refit on its inliers.
/// Throws ErrorKind::InvalidArgument for fewer than 3 points and
/// ErrorKind::NoModelFound when no hypothesis has 3 inliers.
Plane fit_plane_ransac(std::span<const Vec3> points, const RansacParams& params,
                       std::uint64_t seed);

/// Closed convex polytope as outward facets.
class ConvexHull {
 public:
  /// Throws ErrorKind::DegenerateGeometry when the points are coplanar.
  explicit ConvexHull(std::span<const Vec3> points);

  struct Facet {
    std::array<int, 3> v;  // indices into vertices(), counter-clockwise
    Vec3 normal;           // unit, outward
    double offset;         // normal . x <= offset inside
  };

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Facet>& facets() const { return facets_; }
  /// Indices of input points that are hull vertices.
  std::vector<int> hull_vertex_indices() const;
  bool contains(const Vec3& p, double eps = 1e-12) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Facet> facets_;
};

struct SegmentParams {
  double hull_inflation = 1.05;
  /// Translation of the hull toward the plane; negative means 2 * tolerance.
  double hull_shift = -1;
};

struct Segmentation {
  std::vector<Vec3> points;
  std::vector<std::size_t> indices;  // into the input, ascending
  std::size_t above = 0;             // points kept in the first step
  std::size_t reintroduced = 0;
};

/// Keeps points more than plane.tolerance above the plane, then adds back
/// discarded points that fall inside the scaled and shifted convex hull of
/// the kept ones. Throws ErrorKind::EmptyObject when nothing is above the
/// plane.
Segmentation segment_object(std::span<const Vec3> points, const Plane& plane,
                            const SegmentParams& params = {});

}  // namespace shapegrasp

#endif  // SHAPEGRASP_SCENE_HPP
