#include "shapegrasp/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

namespace shapegrasp {

namespace {

using Quadric = Eigen::Matrix4d;

struct Candidate {
  double cost;
  int u, v;
  unsigned version_u, version_v;
  Vec3 target;
  bool operator>(const Candidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (u != o.u) return u > o.u;
    return v > o.v;
  }
};

class Collapser {
 public:
  explicit Collapser(const TriangleMesh& mesh)
      : pos_(mesh.vertices()),
        tris_(mesh.triangles()),
        tri_alive_(tris_.size(), 1),
        vert_alive_(pos_.size(), 1),
        version_(pos_.size(), 0),
        fixed_(pos_.size(), 0),
        incident_(pos_.size()),
        quadric_(pos_.size(), Quadric::Zero()) {
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      for (int k = 0; k < 3; ++k)
        incident_[static_cast<std::size_t>(tris_[t][k])].push_back(
            static_cast<int>(t));
      const Vec3& a = pos_[tris_[t][0]];
      Vec3 n = (pos_[tris_[t][1]] - a).cross(pos_[tris_[t][2]] - a);
      const double len = n.norm();
      if (len <= 0) continue;
      n /= len;
      Eigen::Vector4d plane(n.x(), n.y(), n.z(), -n.dot(a));
      // Area-weighted plane quadric.
      const Quadric kp = 0.5 * len * plane * plane.transpose();
      for (int k = 0; k < 3; ++k) quadric_[tris_[t][k]] += kp;
    }
    // Vertices on open boundaries or non-manifold edges stay fixed.
    std::unordered_map<std::uint64_t, int> edge_use;
    for (const auto& t : tris_)
      for (int k = 0; k < 3; ++k) ++edge_use[key(t[k], t[(k + 1) % 3])];
    for (const auto& [k, count] : edge_use)
      if (count != 2) {
        fixed_[k >> 32] = 1;
        fixed_[k & 0xffffffffu] = 1;
      }
    alive_count_ = tris_.size();
  }

  std::size_t alive() const { return alive_count_; }

  bool run(std::size_t target) {
    for (std::size_t t = 0; t < tris_.size(); ++t)
      for (int k = 0; k < 3; ++k) {
        const int a = tris_[t][k], b = tris_[t][(k + 1) % 3];
        if (a < b) push(a, b);
      }
    while (alive_count_ > target && !heap_.empty()) {
      Candidate c = heap_.top();
      heap_.pop();
      if (!vert_alive_[c.u] || !vert_alive_[c.v] ||
          version_[c.u] != c.version_u || version_[c.v] != c.version_v)
        continue;
      if (!collapse_ok(c.u, c.v, c.target)) continue;
      collapse(c.u, c.v, c.target);
    }
    return alive_count_ <= target;
  }

  TriangleMesh result() const {
    std::vector<Vec3i> keep;
    for (std::size_t t = 0; t < tris_.size(); ++t)
      if (tri_alive_[t]) keep.push_back(tris_[t]);
    return compact_vertices(TriangleMesh(pos_, std::move(keep)));
  }

 private:
  static std::uint64_t key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
  }

  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int t : incident_[v]) {
      if (!tri_alive_[t]) continue;
      for (int k = 0; k < 3; ++k)
        if (tris_[t][k] != v) out.push_back(tris_[t][k]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool has_triangle(int a, int b, int c) const {
    for (int t : incident_[a]) {
      if (!tri_alive_[t]) continue;
      const Vec3i& f = tris_[t];
      const bool hb = f[0] == b || f[1] == b || f[2] == b;
      const bool hc = f[0] == c || f[1] == c || f[2] == c;
      if (hb && hc) return true;
    }
    return false;
  }

  void push(int u, int v) {
    if (fixed_[u] || fixed_[v]) return;
    const Quadric q = quadric_[u] + quadric_[v];
    auto cost_at = [&](const Vec3& p) {
      const Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
      return std::max(0.0, h.dot(q * h));
    };
    const Mat3 a = q.topLeftCorner<3, 3>();
    const Vec3 b = q.topRightCorner<3, 1>();
    Vec3 best = 0.5 * (pos_[u] + pos_[v]);
    double best_cost = cost_at(best);
    Eigen::FullPivLU<Mat3> lu(a);
    lu.setThreshold(1e-10);
    if (lu.isInvertible()) {
      const Vec3 x = lu.solve(-b);
      // Keep the optimum near the edge; far optima come from near-flat
      // neighborhoods and produce slivers.
      const double edge_len = (pos_[u] - pos_[v]).norm();
      if (all_finite(x) && (x - best).norm() <= 2.0 * edge_len) {
        const double c = cost_at(x);
        if (c <= best_cost) {
          best = x;
          best_cost = c;
        }
      }
    }
    for (const Vec3* p : {&pos_[u], &pos_[v]}) {
      const double c = cost_at(*p);
      if (c < best_cost) {
        best_cost = c;
        best = *p;
      }
    }
    heap_.push({best_cost, u, v, version_[u], version_[v], best});
  }

  bool collapse_ok(int u, int v, const Vec3& target) const {
    const auto nu = neighbors(u);
    const auto nv = neighbors(v);
    std::vector<int> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(),
                          std::back_inserter(common));
    if (common.size() != 2) return false;
    for (int c : common)
      if (!has_triangle(u, v, c)) return false;
    if (has_triangle(u, common[0], common[1]) ||
        has_triangle(v, common[0], common[1]))
      return false;
    // Reject fold-overs and slivers among triangles that survive.
    for (int w : {u, v}) {
      for (int t : incident_[w]) {
        if (!tri_alive_[t]) continue;
        const Vec3i& f = tris_[t];
        const bool has_u = f[0] == u || f[1] == u || f[2] == u;
        const bool has_v = f[0] == v || f[1] == v || f[2] == v;
        if (has_u && has_v) continue;
        Vec3 p[3], q[3];
        for (int k = 0; k < 3; ++k) {
          p[k] = pos_[f[k]];
          q[k] = (f[k] == u || f[k] == v) ? target : p[k];
        }
        const Vec3 n0 = (p[1] - p[0]).cross(p[2] - p[0]);
        const Vec3 n1 = (q[1] - q[0]).cross(q[2] - q[0]);
        const double l0 = n0.norm(), l1 = n1.norm();
        if (l1 < 2 * kDegenerateArea) return false;
        if (l0 > 0 && n0.dot(n1) < 0.2 * l0 * l1) return false;
      }
    }
    return true;
  }

  void collapse(int u, int v, const Vec3& target) {
    for (int t : incident_[v]) {
      if (!tri_alive_[t]) continue;
      Vec3i& f = tris_[t];
      const bool has_u = f[0] == u || f[1] == u || f[2] == u;
      if (has_u) {
        tri_alive_[t] = 0;
        --alive_count_;
        continue;
      }
      for (int k = 0; k < 3; ++k)
        if (f[k] == v) f[k] = u;
      incident_[u].push_back(t);
    }
    std::erase_if(incident_[u], [&](int t) { return !tri_alive_[t]; });
    incident_[v].clear();
    vert_alive_[v] = 0;
    pos_[u] = target;
    quadric_[u] += quadric_[v];
    ++version_[u];
    ++version_[v];
    for (int w : neighbors(u)) push(std::min(u, w), std::max(u, w));
  }

  std::vector<Vec3> pos_;
  std::vector<Vec3i> tris_;
  std::vector<char> tri_alive_, vert_alive_;
  std::vector<unsigned> version_;
  std::vector<char> fixed_;
  std::vector<std::vector<int>> incident_;
  std::vector<Quadric, Eigen::aligned_allocator<Quadric>> quadric_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
  std::size_t alive_count_ = 0;
};

}  // namespace

DecimationResult decimate(const TriangleMesh& mesh, double target_fraction) {
  if (!(target_fraction > 0 && target_fraction <= 1))
    throw Error(ErrorKind::InvalidArgument,
                "target_fraction must lie in (0,1]");
  if (target_fraction == 1.0 || mesh.empty()) return {mesh, false};
  const auto target = static_cast<std::size_t>(
      std::floor(target_fraction * static_cast<double>(mesh.triangle_count())));
  Collapser collapser(mesh);
  const bool reached = collapser.run(target);
  return {collapser.result(), !reached};
}

}  // namespace shapegrasp
