// Shared fixtures and independent oracles for the unit and acceptance tests.
#ifndef SHAPEGRASP_TESTS_SUPPORT_HPP
#define SHAPEGRASP_TESTS_SUPPORT_HPP

#include "shapegrasp/mesh.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace testsupport {

using shapegrasp::TriangleMesh;
using shapegrasp::Vec3;
using shapegrasp::Vec3i;

// Generalized winding number: sum of signed solid angles (Van Oosterom &
// Strackee). About 1 inside a closed outward mesh, about 0 outside.
inline double winding_number(const TriangleMesh& mesh, const Vec3& p) {
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3 a = mesh.corner(t, 0) - p;
    const Vec3 b = mesh.corner(t, 1) - p;
    const Vec3 c = mesh.corner(t, 2) - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2 * std::atan2(num, den);
  }
  return total / (4 * M_PI);
}

inline bool winding_inside(const TriangleMesh& mesh, const Vec3& p) {
  return winding_number(mesh, p) > 0.5;
}

// Unsigned distance to the surface, brute force over all triangles.
inline double brute_distance(const TriangleMesh& mesh, const Vec3& p) {
  double best = 1e300;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3 q = shapegrasp::closest_point_on_triangle(
        p, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2));
    best = std::min(best, (q - p).norm());
  }
  return best;
}

// Box without its top (+z) face.
inline TriangleMesh open_box(const Vec3& lo, const Vec3& hi) {
  const TriangleMesh box = shapegrasp::make_box(lo, hi);
  std::vector<Vec3i> keep;
  for (std::size_t t = 0; t < box.triangle_count(); ++t) {
    bool top = true;
    for (int k = 0; k < 3; ++k) top = top && box.corner(t, k).z() == hi.z();
    if (!top) keep.push_back(box.triangles()[t]);
  }
  return TriangleMesh(box.vertices(), keep);
}

// Five closed test meshes, each under 5k triangles.
inline std::vector<std::pair<std::string, TriangleMesh>> closed_meshes() {
  using shapegrasp::make_box;
  return {
      {"tetrahedron", shapegrasp::make_tetrahedron()},
      {"box", make_box(Vec3(-0.4, -0.3, -0.2), Vec3(0.4, 0.3, 0.2))},
      {"icosphere", shapegrasp::make_icosphere(Vec3(0.05, -0.02, 0.01), 0.45, 3)},
      {"uv_sphere", shapegrasp::make_uv_sphere(Vec3::Zero(), 0.4, 24, 48)},
      {"torus", shapegrasp::make_torus(0.3, 0.12, 48, 24)},
  };
}

// Writes the five-object toy corpus (two categories, one open surface).
inline void write_toy_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "boxes");
  fs::create_directories(dir / "round");
  shapegrasp::save_mesh(shapegrasp::make_box(Vec3(-0.3, -0.2, -0.1), Vec3(0.3, 0.2, 0.1)),
                        dir / "boxes" / "slab.off");
  shapegrasp::save_mesh(shapegrasp::make_tetrahedron(), dir / "boxes" / "tet.obj");
  shapegrasp::save_mesh(open_box(Vec3::Constant(-0.5), Vec3::Constant(0.5)),
                        dir / "boxes" / "openbox.off");
  shapegrasp::save_mesh(shapegrasp::make_icosphere(Vec3::Zero(), 0.5, 3),
                        dir / "round" / "sphere.ply");
  shapegrasp::save_mesh(shapegrasp::make_torus(0.4, 0.15, 32, 16),
                        dir / "round" / "torus.off");
}

// Pipeline settings small enough for unit tests: coarse watertight grid,
// a few thousand queries, two small views, two grasps.
inline nlohmann::json small_config() {
  return {{"watertight_views", 20},
          {"watertight_resolution", 40},
          {"surface_samples", 2000},
          {"queries",
           {{"uniform_count", 2000},
            {"noise_stds", {0.01, 0.05}},
            {"points_per_std", 500},
            {"sphere_radii", {0.8}},
            {"points_per_sphere", 500}}},
          {"views", 2},
          {"camera", {{"width", 160}, {"height", 120}, {"fx", 144}, {"fy", 144}, {"cx", 79.5}, {"cy", 59.5}}},
          {"grasps", 2}};
}

// One-sample Kolmogorov-Smirnov test against a continuous CDF; returns the
// asymptotic p-value.
template <typename Cdf>
double ks_pvalue(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  if (lambda < 0.2) return 1.0;
  double q = 0;
  for (int k = 1; k <= 100; ++k)
    q += 2 * (k % 2 ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / ("shapegrasp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Compares every regular file under two trees byte for byte.
inline bool trees_identical(const std::filesystem::path& a,
                            const std::filesystem::path& b, std::string* diff = nullptr);

}  // namespace testsupport

#include <fstream>
#include <iterator>
#include <set>

inline bool testsupport::trees_identical(const std::filesystem::path& a,
                                         const std::filesystem::path& b,
                                         std::string* diff) {
  namespace fs = std::filesystem;
  auto list = [](const fs::path& root) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).string());
    return out;
  };
  const auto la = list(a), lb = list(b);
  if (la != lb) {
    if (diff) *diff = "file lists differ";
    return false;
  }
  for (const auto& rel : la) {
    std::ifstream fa(a / rel, std::ios::binary), fb(b / rel, std::ios::binary);
    const std::string ca((std::istreambuf_iterator<char>(fa)), {});
    const std::string cb((std::istreambuf_iterator<char>(fb)), {});
    if (ca != cb) {
      if (diff) *diff = rel;
      return false;
    }
  }
  return true;
}

#endif  // SHAPEGRASP_TESTS_SUPPORT_HPP
