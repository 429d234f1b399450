#ifndef SHAPEGRASP_BVH_HPP
#define SHAPEGRASP_BVH_HPP

#include "shapegrasp/mesh.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace shapegrasp {

struct RayHit {
  double t = 0;        // ray parameter, origin + t * direction
  std::size_t tri = 0;
  double u = 0, v = 0;  // barycentrics of corners 1 and 2
};

struct SurfacePoint {
  Vec3 point;
  std::size_t tri = 0;
  double distance = 0;
};

/// Box with half extents `half` in its own frame; `pose` maps box -> world.
struct OrientedBox {
  Pose pose = Pose::Identity();
  Vec3 half = Vec3::Zero();

  bool contains(const Vec3& p, double eps = 0) const;
};

/// Möller–Trumbore. Hits on edges and vertices count (inclusive test).
std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& dir,
                                         const Vec3& a, const Vec3& b,
                                         const Vec3& c);

bool triangle_overlaps_box(const Vec3& a, const Vec3& b, const Vec3& c,
                           const OrientedBox& box);

/// Bounding-volume hierarchy over a triangle mesh. Immutable after
/// construction and safe for concurrent queries.
class TriangleBvh {
 public:
  explicit TriangleBvh(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return *mesh_; }
  bool watertight() const { return watertight_; }

  /// Nearest hit with t in (t_min, t_max]; ties broken by lower triangle
  /// index.
  std::optional<RayHit> closest_hit(const Vec3& origin, const Vec3& dir,
                                    double t_min = 0.0,
                                    double t_max = 1e300) const;
  /// All hits with t > t_min, sorted by (t, triangle).
  std::vector<RayHit> all_hits(const Vec3& origin, const Vec3& dir,
                               double t_min = 0.0) const;
  /// Closest surface point within max_distance.
  std::optional<SurfacePoint> closest_point(const Vec3& p,
                                            double max_distance = 1e300) const;
  bool overlaps(const OrientedBox& box) const;

  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for leaves
    int first = 0, count = 0;   // range into order_
  };
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& leaf_order() const { return order_; }

 private:
  int build(int first, int count, const std::vector<Vec3>& centroids);

  std::shared_ptr<const TriangleMesh> mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Eigen::AlignedBox3d> tri_boxes_;
  bool watertight_ = false;
};

// Reference implementations that visit every triangle.
std::optional<RayHit> brute_force_closest_hit(const TriangleMesh& mesh,
                                              const Vec3& origin,
                                              const Vec3& dir,
                                              double t_min = 0.0,
                                              double t_max = 1e300);
std::vector<RayHit> brute_force_all_hits(const TriangleMesh& mesh,
                                         const Vec3& origin, const Vec3& dir,
                                         double t_min = 0.0);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_BVH_HPP
