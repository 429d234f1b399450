#include "support.hpp"

#include "shapegrasp/scene.hpp"

#include <doctest.h>

#include <set>

using namespace shapegrasp;

namespace {

struct BowlScene {
  std::vector<Vec3> points;
  std::vector<std::size_t> wall, ring, table;
};

// Cylindrical bowl wall of radius 0.1 standing on z = 0, its bottom ring
// within the table tolerance, and table points outside the occluded disc.
BowlScene bowl_scene() {
  BowlScene s;
  Rng rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 3000; ++i) {
    const double a = 2 * M_PI * u(rng);
    s.wall.push_back(s.points.size());
    s.points.emplace_back(0.1 * std::cos(a), 0.1 * std::sin(a), 0.006 + 0.094 * u(rng));
  }
  for (int i = 0; i < 200; ++i) {
    const double a = 2 * M_PI * i / 200;
    s.ring.push_back(s.points.size());
    s.points.emplace_back(0.08 * std::cos(a), 0.08 * std::sin(a), 0.003);
  }
  for (int i = 0; i < 8000; ++i) {
    const Vec3 p(u(rng) - 0.5, u(rng) - 0.5, 0.008 * (u(rng) - 0.5));
    if (p.head<2>().norm() < 0.12) continue;
    s.table.push_back(s.points.size());
    s.points.push_back(p);
  }
  return s;
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("RANSAC recovers a plane with outliers") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10'000; ++i) pts.emplace_back(u(rng), u(rng), 0.001 * u(rng));
  for (int i = 0; i < 100; ++i) pts.emplace_back(u(rng), u(rng), 0.5 + 0.5 * u(rng));
  RansacParams p;
  p.tolerance = 0.005;
  const Plane plane = fit_plane_ransac(pts, p, 1);
  CHECK(plane.normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((plane.normal - Vec3::UnitZ()).norm() < 1e-3);
  CHECK(std::abs(plane.offset) < 1e-3);
  CHECK(plane.tolerance == 0.005);

  p.sensor_position = Vec3(0, 0, -3);
  const Plane flipped = fit_plane_ransac(pts, p, 1);
  CHECK((flipped.normal + Vec3::UnitZ()).norm() < 1e-3);

  CHECK(fit_plane_ransac(pts, RansacParams(), 9).normal == fit_plane_ransac(pts, RansacParams(), 9).normal);
}

TEST_CASE("RANSAC: exact and degenerate inputs") {
  const std::vector<Vec3> three{Vec3(1, 0, 2), Vec3(0, 1, 2), Vec3(0, 0, 2)};
  const Plane p = fit_plane_ransac(three, RansacParams(), 1);
  for (const auto& v : three) CHECK(std::abs(p.signed_distance(v)) < 1e-12);

  std::vector<Vec3> line;
  for (int i = 0; i < 20; ++i) line.emplace_back(i, 2 * i, 0);
  try {
    fit_plane_ransac(line, RansacParams(), 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoModelFound);
  }
  CHECK_THROWS_AS(fit_plane_ransac(std::vector<Vec3>(2, Vec3::Zero()), RansacParams(), 1), Error);
}

TEST_CASE("convex hull matches brute-force half-space checks") {
  Rng rng(8);
  std::normal_distribution<double> g;
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) {
    const double x = g(rng), y = g(rng), z = g(rng);
    pts.emplace_back(x, y, 0.5 * z);
  }
  const ConvexHull hull(pts);
  for (const auto& f : hull.facets()) {
    CHECK(f.normal.norm() == doctest::Approx(1.0));
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(f.normal.dot(hull.vertices()[static_cast<std::size_t>(f.v[k])]) - f.offset) < 1e-9);
    for (const auto& p : pts) CHECK(f.normal.dot(p) <= f.offset + 1e-9);
  }
  // Closed surface: V - E + F = 2.
  const long f = static_cast<long>(hull.facets().size());
  std::set<int> used;
  for (const auto& fc : hull.facets()) used.insert(fc.v.begin(), fc.v.end());
  CHECK(static_cast<long>(used.size()) - 3 * f / 2 + f == 2);
  CHECK(used.size() == hull.hull_vertex_indices().size());

  // Brute-force extremeness: a point is a hull vertex iff some facet plane
  // passes through it.
  const auto idx = hull.hull_vertex_indices();
  for (int i : idx) CHECK(hull.contains(pts[static_cast<std::size_t>(i)], 1e-9));
  for (const auto& p : pts) CHECK(hull.contains(p, 1e-9));
  CHECK_FALSE(hull.contains(Vec3(100, 0, 0)));

  std::vector<Vec3> cube;
  for (int c = 0; c < 8; ++c) cube.emplace_back(c & 1, c >> 1 & 1, c >> 2 & 1);
  for (int i = 0; i < 50; ++i) cube.emplace_back(0.5, 0.5, 0.02 * i);
  auto corners = ConvexHull(cube).hull_vertex_indices();
  std::sort(corners.begin(), corners.end());
  CHECK(corners == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

  std::vector<Vec3> flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
  try {
    ConvexHull h(flat);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateGeometry);
  }
}

TEST_CASE("segmentation reintroduces the bowl's bottom ring") {
  const auto scene = bowl_scene();
  Plane plane;
  plane.tolerance = 0.005;
  const auto seg = segment_object(scene.points, plane);
  CHECK(seg.above == scene.wall.size());
  CHECK(seg.reintroduced == scene.ring.size());
  std::vector<std::size_t> expect = scene.wall;
  expect.insert(expect.end(), scene.ring.begin(), scene.ring.end());
  std::sort(expect.begin(), expect.end());
  CHECK(seg.indices == expect);
  for (std::size_t k = 0; k < seg.indices.size(); ++k) CHECK(seg.points[k] == scene.points[seg.indices[k]]);
}

TEST_CASE("segmentation: floating object keeps only itself") {
  const auto scene = bowl_scene();
  std::vector<Vec3> pts = scene.points;
  for (auto i : scene.wall) pts[i].z() += 1.0;
  Plane plane;
  SegmentParams p;
  p.hull_shift = 0;
  const auto seg = segment_object(pts, plane, p);
  CHECK(seg.reintroduced == 0);
  CHECK(seg.indices == scene.wall);
}

TEST_CASE("segmentation without inflation or shift adds exactly the points inside the hull") {
  const auto scene = bowl_scene();
  std::vector<Vec3> pts = scene.points;
  // Lift the ring into the hull's vertical range.
  for (auto i : scene.ring) pts[i].z() = 0.004;
  for (auto i : scene.wall) pts[i].z() -= 0.0035;  // some wall points now sit near the table
  Plane plane;
  SegmentParams p;
  p.hull_inflation = 1.0;
  p.hull_shift = 0;
  const auto seg = segment_object(pts, plane, p);
  std::vector<Vec3> above;
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (plane.signed_distance(pts[i]) > plane.tolerance) above.push_back(pts[i]);
  const ConvexHull hull(above);
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (plane.signed_distance(pts[i]) > plane.tolerance || hull.contains(pts[i]))
      expect.push_back(i);
  CHECK(seg.above == above.size());
  CHECK(seg.indices == expect);
}

TEST_CASE("segmentation with nothing above the plane") {
  std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, -1)};
  try {
    segment_object(pts, Plane());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyObject);
  }
}

}  // TEST_SUITE
