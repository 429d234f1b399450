#include "shapegrasp/scene.hpp"

#include "shapegrasp/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <numeric>

namespace shapegrasp {

namespace {

struct Hypothesis {
  std::size_t inliers = 0;
  Vec3 normal = Vec3::Zero();
  double offset = 0;
};

Plane least_squares_plane(std::span<const Vec3> points,
                          const std::vector<std::size_t>& idx) {
  Vec3 centroid = Vec3::Zero();
  for (auto i : idx) centroid += points[i];
  centroid /= static_cast<double>(idx.size());
  Mat3 cov = Mat3::Zero();
  for (auto i : idx) {
    const Vec3 d = points[i] - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  Plane plane;
  plane.normal = solver.eigenvectors().col(0).normalized();
  plane.offset = plane.normal.dot(centroid);
  return plane;
}

}  // namespace

Plane fit_plane_ransac(std::span<const Vec3> points, const RansacParams& params,
                       std::uint64_t seed) {
  const std::size_t n = points.size();
  if (n < 3) throw Error(ErrorKind::InvalidArgument, "need at least 3 points");
  if (!(params.tolerance > 0) || params.iterations < 1)
    throw Error(ErrorKind::InvalidArgument,
                "tolerance and iteration count must be positive");
  Eigen::AlignedBox3d box;
  for (const auto& p : points) box.extend(p);
  const double scale = std::max(box.sizes().maxCoeff(), 1e-300);

  std::vector<Hypothesis> hyps(static_cast<std::size_t>(params.iterations));
  parallel_for(hyps.size(), [&](std::size_t it) {
    Rng rng(derive_seed(seed, it));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (n == 3) { a = 0; b = 1; c = 2; }
    if (a == b || b == c || a == c) return;
    const Vec3 nrm = (points[b] - points[a]).cross(points[c] - points[a]);
    if (nrm.norm() <= 1e-12 * scale * scale) return;
    Hypothesis h;
    h.normal = nrm.normalized();
    h.offset = h.normal.dot(points[a]);
    for (const auto& p : points)
      h.inliers += std::abs(h.normal.dot(p) - h.offset) <= params.tolerance;
    hyps[it] = h;
  });
  std::size_t best = hyps.size();
  for (std::size_t it = 0; it < hyps.size(); ++it)
    if (hyps[it].inliers >= 3 &&
        (best == hyps.size() || hyps[it].inliers > hyps[best].inliers))
      best = it;
  if (best == hyps.size())
    throw Error(ErrorKind::NoModelFound, "no plane with 3 inliers found");

  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(hyps[best].normal.dot(points[i]) - hyps[best].offset) <=
        params.tolerance)
      inliers.push_back(i);
  Plane plane = least_squares_plane(points, inliers);
  plane.tolerance = params.tolerance;

  bool flip = false;
  if (params.sensor_position) {
    flip = plane.signed_distance(*params.sensor_position) < 0;
  } else {
    std::size_t pos = 0, neg = 0;
    for (const auto& p : points) {
      const double d = plane.signed_distance(p);
      pos += d > params.tolerance;
      neg += d < -params.tolerance;
    }
    if (pos != neg) {
      flip = neg > pos;
    } else {
      int axis;
      plane.normal.cwiseAbs().maxCoeff(&axis);
      flip = plane.normal[axis] < 0;
    }
  }
  if (flip) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
  return plane;
}

// Incremental hull: add points one at a time, replacing the facets that see
// the new point by a fan from its horizon.
ConvexHull::ConvexHull(std::span<const Vec3> points) {
  if (points.size() < 4)
    throw Error(ErrorKind::DegenerateGeometry, "hull needs 4 points");
  Eigen::AlignedBox3d box;
  for (const auto& p : points) box.extend(p);
  const double eps = 1e-10 * std::max(box.sizes().maxCoeff(), 1e-300);

  const std::size_t n = points.size();
  std::size_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;
  double best = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (points[i] - points[i0]).squaredNorm();
    if (d > best) { best = d; i1 = i; }
  }
  best = -1;
  const Vec3 dir = (points[i1] - points[i0]).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (points[i] - points[i0]).cross(dir).squaredNorm();
    if (d > best) { best = d; i2 = i; }
  }
  const Vec3 nrm = (points[i1] - points[i0]).cross(points[i2] - points[i0]);
  if (nrm.norm() <= eps * eps)
    throw Error(ErrorKind::DegenerateGeometry, "hull points are collinear");
  best = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(nrm.normalized().dot(points[i] - points[i0]));
    if (d > best) { best = d; i3 = i; }
  }
  if (best <= eps)
    throw Error(ErrorKind::DegenerateGeometry, "hull points are coplanar");

  vertices_.assign(points.begin(), points.end());
  auto make_facet = [&](int a, int b, int c) {
    Facet f;
    f.v = {a, b, c};
    f.normal = (vertices_[b] - vertices_[a]).cross(vertices_[c] - vertices_[a]).normalized();
    f.offset = f.normal.dot(vertices_[a]);
    return f;
  };
  const int a = static_cast<int>(i0), b = static_cast<int>(i1),
            c = static_cast<int>(i2), d = static_cast<int>(i3);
  if (nrm.dot(points[i3] - points[i0]) > 0) {
    facets_ = {make_facet(a, c, b), make_facet(a, b, d), make_facet(b, c, d),
               make_facet(c, a, d)};
  } else {
    facets_ = {make_facet(a, b, c), make_facet(a, d, b), make_facet(b, d, c),
               make_facet(c, d, a)};
  }

  for (std::size_t pi = 0; pi < n; ++pi) {
    const int p = static_cast<int>(pi);
    if (p == a || p == b || p == c || p == d) continue;
    const Vec3& x = vertices_[pi];
    std::vector<char> visible(facets_.size(), 0);
    bool any = false;
    for (std::size_t f = 0; f < facets_.size(); ++f)
      if (facets_[f].normal.dot(x) - facets_[f].offset > eps) {
        visible[f] = 1;
        any = true;
      }
    if (!any) continue;
    std::map<std::pair<int, int>, int> edges;  // directed edge -> count
    for (std::size_t f = 0; f < facets_.size(); ++f) {
      if (!visible[f]) continue;
      const auto& v = facets_[f].v;
      for (int k = 0; k < 3; ++k) edges[{v[k], v[(k + 1) % 3]}]++;
    }
    std::vector<Facet> kept;
    for (std::size_t f = 0; f < facets_.size(); ++f)
      if (!visible[f]) kept.push_back(facets_[f]);
    for (const auto& [e, cnt] : edges)
      if (!edges.count({e.second, e.first}))
        kept.push_back(make_facet(e.first, e.second, p));
    facets_ = std::move(kept);
  }
}

std::vector<int> ConvexHull::hull_vertex_indices() const {
  std::vector<int> idx;
  for (const auto& f : facets_) idx.insert(idx.end(), f.v.begin(), f.v.end());
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

bool ConvexHull::contains(const Vec3& p, double eps) const {
  for (const auto& f : facets_)
    if (f.normal.dot(p) - f.offset > eps) return false;
  return true;
}

Segmentation segment_object(std::span<const Vec3> points, const Plane& plane,
                            const SegmentParams& params) {
  if (!(params.hull_inflation > 0))
    throw Error(ErrorKind::InvalidArgument, "hull inflation must be positive");
  const double shift =
      params.hull_shift < 0 ? 2 * plane.tolerance : params.hull_shift;
  std::vector<char> keep(points.size(), 0);
  std::vector<Vec3> above;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (plane.signed_distance(points[i]) > plane.tolerance) {
      keep[i] = 1;
      above.push_back(points[i]);
    }
  if (above.empty())
    throw Error(ErrorKind::EmptyObject, "no points above the plane");

  Segmentation seg;
  seg.above = above.size();
  std::optional<ConvexHull> hull;
  try {
    const ConvexHull raw(above);
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : above) centroid += p;
    centroid /= static_cast<double>(above.size());
    std::vector<Vec3> moved;
    for (int i : raw.hull_vertex_indices())
      moved.push_back(centroid + params.hull_inflation * (above[i] - centroid) -
                      shift * plane.normal);
    hull.emplace(moved);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateGeometry) throw;
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!keep[i] && hull && hull->contains(points[i])) {
      keep[i] = 1;
      ++seg.reintroduced;
    }
    if (keep[i]) {
      seg.points.push_back(points[i]);
      seg.indices.push_back(i);
    }
  }
  return seg;
}

}  // namespace shapegrasp
