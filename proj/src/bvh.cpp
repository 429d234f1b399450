#include "shapegrasp/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shapegrasp {

namespace {

constexpr int kLeafSize = 4;

bool ray_box(const Eigen::AlignedBox3d& box, const Vec3& origin,
             const Vec3& inv_dir, double t_min, double t_max) {
  for (int k = 0; k < 3; ++k) {
    double t0 = (box.min()[k] - origin[k]) * inv_dir[k];
    double t1 = (box.max()[k] - origin[k]) * inv_dir[k];
    if (std::isnan(t0) || std::isnan(t1)) {
      // Ray parallel to the slab and origin on its plane.
      if (origin[k] < box.min()[k] || origin[k] > box.max()[k]) return false;
      continue;
    }
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_min > t_max) return false;
  }
  return true;
}

bool hit_less(const RayHit& a, const RayHit& b) {
  return a.t < b.t || (a.t == b.t && a.tri < b.tri);
}

}  // namespace

bool OrientedBox::contains(const Vec3& p, double eps) const {
  const Vec3 local = pose.inverse() * p;
  return (local.cwiseAbs() - half).maxCoeff() <= eps;
}

std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& dir,
                                         const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (det == 0.0) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  RayHit hit;
  hit.t = e2.dot(q) * inv;
  hit.u = u;
  hit.v = v;
  return hit;
}

bool triangle_overlaps_box(const Vec3& a, const Vec3& b, const Vec3& c,
                           const OrientedBox& box) {
  // Separating-axis test in the box frame (Akenine-Möller).
  const Pose inv = box.pose.inverse();
  const Vec3 v[3] = {inv * a, inv * b, inv * c};
  const Vec3& h = box.half;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::min({v[0][k], v[1][k], v[2][k]});
    const double hi = std::max({v[0][k], v[1][k], v[2][k]});
    if (lo > h[k] || hi < -h[k]) return false;
  }
  const Vec3 e[3] = {v[1] - v[0], v[2] - v[1], v[0] - v[2]};
  const Vec3 n = e[0].cross(e[1]);
  {
    const double d = n.dot(v[0]);
    const double r = h.dot(n.cwiseAbs());
    if (d > r || d < -r) return false;
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const Vec3 axis = Vec3::Unit(i).cross(e[j]);
      if (axis.squaredNorm() < 1e-30) continue;
      const double p0 = axis.dot(v[0]), p1 = axis.dot(v[1]),
                   p2 = axis.dot(v[2]);
      const double r = h.dot(axis.cwiseAbs());
      if (std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r)
        return false;
    }
  return true;
}

TriangleBvh::TriangleBvh(TriangleMesh mesh)
    : mesh_(std::make_shared<const TriangleMesh>(std::move(mesh))) {
  const auto& m = *mesh_;
  const int n = static_cast<int>(m.triangle_count());
  watertight_ = is_watertight(m);
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), 0);
  tri_boxes_.resize(static_cast<std::size_t>(n));
  std::vector<Vec3> centroids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::AlignedBox3d box;
    for (int k = 0; k < 3; ++k) box.extend(m.corner(i, k));
    tri_boxes_[i] = box;
    centroids[i] = box.center();
  }
  if (n > 0) {
    nodes_.reserve(static_cast<std::size_t>(2 * n / kLeafSize + 2));
    build(0, n, centroids);
  }
}

int TriangleBvh::build(int first, int count,
                       const std::vector<Vec3>& centroids) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, cbox;
  for (int i = first; i < first + count; ++i) {
    box.extend(tri_boxes_[order_[i]]);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  if (count <= kLeafSize) {
    nodes_[index].first = first;
    nodes_[index].count = count;
    return index;
  }
  int axis;
  cbox.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid,
                   order_.begin() + first + count, [&](int a, int b) {
                     const double ca = centroids[a][axis],
                                  cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(first, mid - first, centroids);
  const int right = build(mid, first + count - mid, centroids);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

std::optional<RayHit> TriangleBvh::closest_hit(const Vec3& origin,
                                               const Vec3& dir, double t_min,
                                               double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv = dir.cwiseInverse();
  std::optional<RayHit> best;
  double limit = t_max;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  const auto& m = *mesh_;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!ray_box(node.box, origin, inv, t_min, limit)) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const auto tri = static_cast<std::size_t>(order_[i]);
        auto hit = intersect_triangle(origin, dir, m.corner(tri, 0),
                                      m.corner(tri, 1), m.corner(tri, 2));
        if (!hit || hit->t <= t_min || hit->t > limit) continue;
        hit->tri = tri;
        if (!best || hit_less(*hit, *best)) {
          best = hit;
          limit = hit->t;
        }
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

std::vector<RayHit> TriangleBvh::all_hits(const Vec3& origin, const Vec3& dir,
                                          double t_min) const {
  std::vector<RayHit> hits;
  if (nodes_.empty()) return hits;
  const Vec3 inv = dir.cwiseInverse();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  const auto& m = *mesh_;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!ray_box(node.box, origin, inv, t_min, 1e300)) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const auto tri = static_cast<std::size_t>(order_[i]);
        auto hit = intersect_triangle(origin, dir, m.corner(tri, 0),
                                      m.corner(tri, 1), m.corner(tri, 2));
        if (!hit || hit->t <= t_min) continue;
        hit->tri = tri;
        hits.push_back(*hit);
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  std::sort(hits.begin(), hits.end(), hit_less);
  return hits;
}

std::optional<SurfacePoint> TriangleBvh::closest_point(
    const Vec3& p, double max_distance) const {
  if (nodes_.empty()) return std::nullopt;
  const auto& m = *mesh_;
  std::optional<SurfacePoint> best;
  double best_sq = max_distance * max_distance;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squaredExteriorDistance(p) > best_sq) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const auto tri = static_cast<std::size_t>(order_[i]);
        const Vec3 q = closest_point_on_triangle(p, m.corner(tri, 0),
                                                 m.corner(tri, 1),
                                                 m.corner(tri, 2));
        const double d2 = (q - p).squaredNorm();
        if (d2 < best_sq || (d2 == best_sq && best && tri < best->tri)) {
          best_sq = d2;
          best = SurfacePoint{q, tri, 0.0};
        }
      }
    } else {
      // Visit the nearer child first.
      const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
      const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
      if (dl < dr) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
  }
  if (best) best->distance = std::sqrt(best_sq);
  return best;
}

bool TriangleBvh::overlaps(const OrientedBox& box) const {
  if (nodes_.empty()) return false;
  Eigen::AlignedBox3d world;
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner((i & 1) ? box.half.x() : -box.half.x(),
                      (i & 2) ? box.half.y() : -box.half.y(),
                      (i & 4) ? box.half.z() : -box.half.z());
    world.extend(box.pose * corner);
  }
  const auto& m = *mesh_;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!node.box.intersects(world)) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const auto tri = static_cast<std::size_t>(order_[i]);
        if (triangle_overlaps_box(m.corner(tri, 0), m.corner(tri, 1),
                                  m.corner(tri, 2), box))
          return true;
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return false;
}

std::optional<RayHit> brute_force_closest_hit(const TriangleMesh& mesh,
                                              const Vec3& origin,
                                              const Vec3& dir, double t_min,
                                              double t_max) {
  std::optional<RayHit> best;
  for (std::size_t tri = 0; tri < mesh.triangle_count(); ++tri) {
    auto hit = intersect_triangle(origin, dir, mesh.corner(tri, 0),
                                  mesh.corner(tri, 1), mesh.corner(tri, 2));
    if (!hit || hit->t <= t_min || hit->t > t_max) continue;
    hit->tri = tri;
    if (!best || hit_less(*hit, *best)) best = hit;
  }
  return best;
}

std::vector<RayHit> brute_force_all_hits(const TriangleMesh& mesh,
                                         const Vec3& origin, const Vec3& dir,
                                         double t_min) {
  std::vector<RayHit> hits;
  for (std::size_t tri = 0; tri < mesh.triangle_count(); ++tri) {
    auto hit = intersect_triangle(origin, dir, mesh.corner(tri, 0),
                                  mesh.corner(tri, 1), mesh.corner(tri, 2));
    if (!hit || hit->t <= t_min) continue;
    hit->tri = tri;
    hits.push_back(*hit);
  }
  std::sort(hits.begin(), hits.end(), hit_less);
  return hits;
}

}  // namespace shapegrasp
