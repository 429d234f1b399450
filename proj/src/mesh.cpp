#include "shapegrasp/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace shapegrasp {

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices,
                           std::vector<Vec3i> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const auto n = static_cast<int>(vertices_.size());
  for (const auto& v : vertices_)
    if (!all_finite(v))
      throw Error(ErrorKind::NonFinite, "mesh vertex has non-finite coordinate");
  areas_.reserve(triangles_.size());
  for (const auto& t : triangles_) {
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= n)
        throw Error(ErrorKind::InvalidArgument,
                    "triangle index " + std::to_string(t[k]) +
                        " out of range for " + std::to_string(n) +
                        " vertices");
    const Vec3& a = vertices_[t[0]];
    areas_.push_back(
        0.5 * (vertices_[t[1]] - a).cross(vertices_[t[2]] - a).norm());
  }
}

Vec3 TriangleMesh::normal(std::size_t tri) const {
  const Vec3& a = corner(tri, 0);
  Vec3 n = (corner(tri, 1) - a).cross(corner(tri, 2) - a);
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

double TriangleMesh::total_area() const {
  return std::accumulate(areas_.begin(), areas_.end(), 0.0);
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& v : vertices_) box.extend(v);
  return box;
}

RigidScaleTransform RigidScaleTransform::inverse() const {
  // p = q / s - t  ==  (1/s) .* (q + (-s .* t))
  RigidScaleTransform inv;
  inv.scale = scale.cwiseInverse();
  inv.translation = -scale.cwiseProduct(translation);
  return inv;
}

RigidScaleTransform RigidScaleTransform::compose(
    const RigidScaleTransform& first) const {
  // s2 .* (s1 .* (p + t1) + t2) = (s2 .* s1) .* (p + t1 + t2 ./ s1)
  RigidScaleTransform out;
  out.scale = scale.cwiseProduct(first.scale);
  out.translation = first.translation + translation.cwiseQuotient(first.scale);
  return out;
}

TriangleMesh transformed(const TriangleMesh& mesh,
                         const RigidScaleTransform& t) {
  std::vector<Vec3> v;
  v.reserve(mesh.vertex_count());
  for (const auto& p : mesh.vertices()) v.push_back(t.apply(p));
  auto tris = mesh.triangles();
  // A negative scale determinant flips orientation.
  if (t.scale.prod() < 0)
    for (auto& tri : tris) std::swap(tri[1], tri[2]);
  return TriangleMesh(std::move(v), std::move(tris));
}

TriangleMesh transformed(const TriangleMesh& mesh, const Pose& pose) {
  std::vector<Vec3> v;
  v.reserve(mesh.vertex_count());
  for (const auto& p : mesh.vertices()) v.push_back(pose * p);
  return TriangleMesh(std::move(v), mesh.triangles());
}

TriangleMesh compact_vertices(const TriangleMesh& mesh) {
  // Referenced vertices keep their relative order.
  std::vector<int> remap(mesh.vertex_count(), -1);
  for (const auto& t : mesh.triangles())
    for (int k = 0; k < 3; ++k) remap[static_cast<std::size_t>(t[k])] = 0;
  std::vector<Vec3> verts;
  for (std::size_t i = 0; i < remap.size(); ++i)
    if (remap[i] == 0) {
      remap[i] = static_cast<int>(verts.size());
      verts.push_back(mesh.vertices()[i]);
    }
  std::vector<Vec3i> tris;
  tris.reserve(mesh.triangle_count());
  for (const auto& t : mesh.triangles())
    tris.emplace_back(remap[static_cast<std::size_t>(t[0])],
                      remap[static_cast<std::size_t>(t[1])],
                      remap[static_cast<std::size_t>(t[2])]);
  return TriangleMesh(std::move(verts), std::move(tris));
}

TriangleMesh remove_degenerate_triangles(const TriangleMesh& mesh) {
  std::vector<Vec3i> keep;
  keep.reserve(mesh.triangle_count());
  for (std::size_t i = 0; i < mesh.triangle_count(); ++i) {
    const Vec3i& t = mesh.triangles()[i];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (mesh.areas()[i] < kDegenerateArea) continue;
    keep.push_back(t);
  }
  return compact_vertices(TriangleMesh(mesh.vertices(), std::move(keep)));
}

TriangleMesh weld_vertices(const TriangleMesh& mesh) {
  std::map<std::array<double, 3>, int> index;
  std::vector<int> remap(mesh.vertex_count());
  std::vector<Vec3> verts;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3& p = mesh.vertices()[i];
    auto [it, inserted] = index.try_emplace({p.x(), p.y(), p.z()},
                                            static_cast<int>(verts.size()));
    if (inserted) verts.push_back(p);
    remap[i] = it->second;
  }
  std::vector<Vec3i> tris;
  for (const auto& t : mesh.triangles())
    tris.emplace_back(remap[t[0]], remap[t[1]], remap[t[2]]);
  return TriangleMesh(std::move(verts), std::move(tris));
}

TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b) {
  std::vector<Vec3> verts = a.vertices();
  verts.insert(verts.end(), b.vertices().begin(), b.vertices().end());
  std::vector<Vec3i> tris = a.triangles();
  const int off = static_cast<int>(a.vertex_count());
  for (const auto& t : b.triangles()) tris.push_back(t + Vec3i::Constant(off));
  return TriangleMesh(std::move(verts), std::move(tris));
}

RigidScaleTransform unit_cube_transform(std::span<const Vec3> points) {
  if (points.empty())
    throw Error(ErrorKind::EmptyGeometry, "cannot normalize empty geometry");
  Eigen::AlignedBox3d box;
  for (const auto& p : points) box.extend(p);
  const double longest = box.sizes().maxCoeff();
  if (!(longest > 0))
    throw Error(ErrorKind::DegenerateGeometry,
                "zero-extent geometry cannot be normalized");
  RigidScaleTransform t;
  t.translation = -box.center();
  t.scale = Vec3::Constant(1.0 / longest);
  return t;
}

std::pair<TriangleMesh, RigidScaleTransform> normalize_unit_cube(
    const TriangleMesh& mesh) {
  if (mesh.empty())
    throw Error(ErrorKind::EmptyGeometry, "cannot normalize an empty mesh");
  const auto t = unit_cube_transform(mesh.vertices());
  return {transformed(mesh, t), t};
}

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;  // root is the smaller index
  }
};

}  // namespace

std::vector<int> triangle_components(const TriangleMesh& mesh) {
  const std::size_t nt = mesh.triangle_count();
  DisjointSet ds(nt);
  std::unordered_map<std::uint64_t, int> first_user;
  first_user.reserve(nt * 2);
  for (std::size_t i = 0; i < nt; ++i) {
    const Vec3i& t = mesh.triangles()[i];
    for (int k = 0; k < 3; ++k) {
      const auto key = edge_key(t[k], t[(k + 1) % 3]);
      auto [it, inserted] = first_user.try_emplace(key, static_cast<int>(i));
      if (!inserted) ds.unite(it->second, static_cast<int>(i));
    }
  }
  std::vector<int> label(nt, -1);
  std::unordered_map<int, int> root_label;
  for (std::size_t i = 0; i < nt; ++i) {
    const int r = ds.find(static_cast<int>(i));
    auto [it, inserted] =
        root_label.try_emplace(r, static_cast<int>(root_label.size()));
    label[i] = it->second;
  }
  return label;
}

TriangleMesh remove_small_components(const TriangleMesh& mesh,
                                     double min_triangle_fraction) {
  if (!(min_triangle_fraction > 0 && min_triangle_fraction < 1))
    throw Error(ErrorKind::InvalidArgument,
                "min_triangle_fraction must lie in (0,1)");
  if (mesh.empty()) return mesh;
  const auto label = triangle_components(mesh);
  const int count = *std::max_element(label.begin(), label.end()) + 1;
  if (count == 1) return mesh;
  std::vector<std::size_t> size(static_cast<std::size_t>(count), 0);
  for (int l : label) ++size[static_cast<std::size_t>(l)];
  // Labels follow first-triangle order, so max_element picks the lowest
  // first index on ties.
  const auto largest = static_cast<int>(
      std::max_element(size.begin(), size.end()) - size.begin());
  const double threshold =
      min_triangle_fraction * static_cast<double>(mesh.triangle_count());
  std::vector<Vec3i> keep;
  for (std::size_t i = 0; i < mesh.triangle_count(); ++i) {
    const int l = label[i];
    if (l == largest ||
        static_cast<double>(size[static_cast<std::size_t>(l)]) >= threshold)
      keep.push_back(mesh.triangles()[i]);
  }
  return compact_vertices(TriangleMesh(mesh.vertices(), std::move(keep)));
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n,
                                 std::uint64_t seed,
                                 std::vector<std::size_t>& triangle_of_sample) {
  if (mesh.empty())
    throw Error(ErrorKind::EmptyGeometry, "cannot sample an empty mesh");
  std::vector<double> cdf(mesh.triangle_count());
  std::partial_sum(mesh.areas().begin(), mesh.areas().end(), cdf.begin());
  const double total = cdf.back();
  if (!(total > 0))
    throw Error(ErrorKind::DegenerateGeometry, "mesh has zero surface area");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  triangle_of_sample.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = uni(rng) * total;
    auto tri = static_cast<std::size_t>(
        std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
    tri = std::min(tri, cdf.size() - 1);
    // Skip zero-area triangles that upper_bound can land on at ties.
    while (mesh.areas()[tri] <= 0 && tri + 1 < cdf.size()) ++tri;
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    const Vec3& a = mesh.corner(tri, 0);
    const Vec3& b = mesh.corner(tri, 1);
    const Vec3& c = mesh.corner(tri, 2);
    out.push_back((1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c);
    triangle_of_sample[i] = tri;
  }
  return out;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n,
                                 std::uint64_t seed) {
  std::vector<std::size_t> unused;
  return sample_surface(mesh, n, seed, unused);
}

bool is_watertight(const TriangleMesh& mesh) {
  if (mesh.empty()) return false;
  // Directed edge counts; a closed, consistently oriented surface uses every
  // directed edge exactly once and its reverse exactly once.
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.triangle_count() * 3);
  auto key = [](int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  };
  for (const auto& t : mesh.triangles()) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return false;
    for (int k = 0; k < 3; ++k)
      if (++directed[key(t[k], t[(k + 1) % 3])] > 1) return false;
  }
  for (const auto& [k, count] : directed) {
    const int a = static_cast<int>(k >> 32);
    const int b = static_cast<int>(k & 0xffffffffu);
    if (!directed.contains(key(b, a))) return false;
  }
  return true;
}

long euler_characteristic(const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, int> edges;
  std::vector<char> used(mesh.vertex_count(), 0);
  for (const auto& t : mesh.triangles())
    for (int k = 0; k < 3; ++k) {
      edges[edge_key(t[k], t[(k + 1) % 3])] = 1;
      used[static_cast<std::size_t>(t[k])] = 1;
    }
  const long v = std::count(used.begin(), used.end(), 1);
  return v - static_cast<long>(edges.size()) +
         static_cast<long>(mesh.triangle_count());
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  // Ericson, Real-Time Collision Detection 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i)
    v.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                   (i & 4) ? hi.z() : lo.z());
  // Outward-facing quads, split into two triangles each.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  std::vector<Vec3i> t;
  for (const auto& q : quads) {
    t.emplace_back(q[0], q[1], q[2]);
    t.emplace_back(q[0], q[2], q[3]);
  }
  return TriangleMesh(std::move(v), std::move(t));
}

TriangleMesh make_tetrahedron() {
  std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<Vec3i> t{{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return TriangleMesh(std::move(v), std::move(t));
}

TriangleMesh make_uv_sphere(const Vec3& center, double radius, int stacks,
                            int slices) {
  std::vector<Vec3> v;
  std::vector<Vec3i> t;
  v.push_back(center + Vec3(0, 0, radius));
  for (int i = 1; i < stacks; ++i) {
    const double theta = M_PI * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double phi = 2 * M_PI * j / slices;
      v.push_back(center + radius * Vec3(std::sin(theta) * std::cos(phi),
                                         std::sin(theta) * std::sin(phi),
                                         std::cos(theta)));
    }
  }
  v.push_back(center - Vec3(0, 0, radius));
  const int bottom = static_cast<int>(v.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) t.emplace_back(0, ring(1, j), ring(1, j + 1));
  for (int i = 1; i < stacks - 1; ++i)
    for (int j = 0; j < slices; ++j) {
      t.emplace_back(ring(i, j), ring(i + 1, j), ring(i + 1, j + 1));
      t.emplace_back(ring(i, j), ring(i + 1, j + 1), ring(i, j + 1));
    }
  for (int j = 0; j < slices; ++j)
    t.emplace_back(bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j));
  return TriangleMesh(std::move(v), std::move(t));
}

TriangleMesh make_icosphere(const Vec3& center, double radius,
                            int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v{{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Vec3i> t{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10},
                       {0, 10, 11}, {1, 5, 9}, {5, 11, 4},  {11, 10, 2},
                       {10, 7, 6},  {7, 1, 8}, {3, 9, 4},   {3, 4, 2},
                       {3, 2, 6},   {3, 6, 8}, {3, 8, 9},   {4, 9, 5},
                       {2, 4, 11},  {6, 2, 10}, {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Vec3i> next;
    for (const auto& f : t) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.emplace_back(f[0], ab, ca);
      next.emplace_back(f[1], bc, ab);
      next.emplace_back(f[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    t = std::move(next);
  }
  for (auto& p : v) p = center + radius * p;
  return TriangleMesh(std::move(v), std::move(t));
}

TriangleMesh make_torus(double major_radius, double minor_radius, int rings,
                        int sides) {
  std::vector<Vec3> v;
  std::vector<Vec3i> t;
  for (int i = 0; i < rings; ++i) {
    const double u = 2 * M_PI * i / rings;
    for (int j = 0; j < sides; ++j) {
      const double w = 2 * M_PI * j / sides;
      const double r = major_radius + minor_radius * std::cos(w);
      v.emplace_back(r * std::cos(u), r * std::sin(u),
                     minor_radius * std::sin(w));
    }
  }
  auto id = [&](int i, int j) { return (i % rings) * sides + (j % sides); };
  for (int i = 0; i < rings; ++i)
    for (int j = 0; j < sides; ++j) {
      t.emplace_back(id(i, j), id(i + 1, j), id(i + 1, j + 1));
      t.emplace_back(id(i, j), id(i + 1, j + 1), id(i, j + 1));
    }
  return TriangleMesh(std::move(v), std::move(t));
}

}  // namespace shapegrasp
