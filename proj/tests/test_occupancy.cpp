#include "support.hpp"

#include "shapegrasp/bvh.hpp"
#include "shapegrasp/occupancy.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <functional>
#include <set>

using namespace shapegrasp;

namespace {

TriangleBvh unit_box_bvh() {
  return TriangleBvh(make_box(Vec3::Constant(-0.5), Vec3::Constant(0.5)));
}

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g;
  Vec3 d;
  do {
    const double x = g(rng), y = g(rng), z = g(rng);
    d = Vec3(x, y, z);
  } while (d.norm() < 1e-9);
  return d.normalized();
}

std::string bytes_of(const std::vector<QueryPointSet>& sets) {
  std::string out;
  for (const auto& s : sets) {
    out.append(reinterpret_cast<const char*>(s.points.data()),
               s.points.size() * sizeof(Vec3));
    out.append(reinterpret_cast<const char*>(s.labels.data()), s.labels.size());
  }
  return out;
}

}  // namespace

TEST_SUITE("occupancy") {

TEST_CASE("BVH structure: every triangle in one leaf, boxes nest") {
  const TriangleBvh bvh(make_icosphere(Vec3::Zero(), 1, 3));
  std::vector<int> seen(bvh.mesh().triangle_count(), 0);
  const auto& nodes = bvh.nodes();
  std::function<void(int)> visit = [&](int i) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.left < 0) {
      for (int k = n.first; k < n.first + n.count; ++k) {
        const int t = bvh.leaf_order()[static_cast<std::size_t>(k)];
        ++seen[static_cast<std::size_t>(t)];
        for (int c = 0; c < 3; ++c)
          CHECK(n.box.exteriorDistance(bvh.mesh().corner(static_cast<std::size_t>(t), c)) == 0);
      }
      return;
    }
    for (int child : {n.left, n.right}) {
      CHECK(n.box.contains(nodes[static_cast<std::size_t>(child)].box));
      visit(child);
    }
  };
  visit(0);
  for (int c : seen) CHECK(c == 1);
}

TEST_CASE("BVH queries match brute force") {
  const auto mesh = make_torus(0.4, 0.15, 40, 20);
  const TriangleBvh bvh(mesh);
  Rng rng(3);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  int hits = 0;
  for (int i = 0; i < 500; ++i) {
    const Vec3 o(u(rng), u(rng), u(rng));
    const Vec3 d = random_unit(rng);
    const auto a = bvh.closest_hit(o, d);
    const auto b = brute_force_closest_hit(mesh, o, d);
    REQUIRE(a.has_value() == b.has_value());
    if (a) {
      ++hits;
      CHECK(a->t == b->t);
      CHECK(a->tri == b->tri);
    }
    const auto all_a = bvh.all_hits(o, d);
    const auto all_b = brute_force_all_hits(mesh, o, d);
    REQUIRE(all_a.size() == all_b.size());
    for (std::size_t k = 0; k < all_a.size(); ++k) CHECK(all_a[k].tri == all_b[k].tri);

    const auto cp = bvh.closest_point(o);
    REQUIRE(cp.has_value());
    CHECK(cp->distance == doctest::Approx(testsupport::brute_distance(mesh, o)).epsilon(1e-12));
  }
  CHECK(hits > 50);
}

TEST_CASE("oriented box overlap") {
  const TriangleBvh bvh = unit_box_bvh();
  OrientedBox box;
  box.half = Vec3::Constant(0.1);
  box.pose.translation() = Vec3(0.55, 0, 0);
  CHECK(bvh.overlaps(box));
  box.pose.translation() = Vec3(0.7, 0, 0);
  CHECK_FALSE(bvh.overlaps(box));
  box.pose.translation() = Vec3::Zero();  // fully inside, touches no triangle
  CHECK_FALSE(bvh.overlaps(box));
  box.pose = Pose(Eigen::AngleAxisd(M_PI / 4, Vec3::UnitZ()));
  box.pose.translation() = Vec3(0.62, 0, 0);  // corner reaches x = 0.62 - 0.1414
  CHECK(bvh.overlaps(box));
}

TEST_CASE("point occupancy on the unit cube") {
  const TriangleBvh bvh = unit_box_bvh();
  CHECK(point_occupancy(bvh, Vec3::Zero()));
  CHECK_FALSE(point_occupancy(bvh, Vec3(2, 0, 0)));
  // Axis rays from the center hit edges and vertices of the triangulation.
  CHECK(point_occupancy(bvh, Vec3(0.25, 0.25, 0.25)));
  CHECK_FALSE(point_occupancy(bvh, Vec3(0.75, 0.25, 0.25)));
}

TEST_CASE("open mesh is a precondition violation") {
  const TriangleBvh bvh(testsupport::open_box(Vec3::Constant(-0.5), Vec3::Constant(0.5)));
  try {
    point_occupancy(bvh, Vec3::Zero());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
  }
}

TEST_CASE("parity occupancy agrees with the winding-number oracle") {
  for (const auto& [name, mesh] : testsupport::closed_meshes()) {
    CAPTURE(name);
    const TriangleBvh bvh(mesh);
    Rng rng(fnv1a(name));
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    int tested = 0, agree = 0;
    while (tested < 2000) {
      const Vec3 p(u(rng), u(rng), u(rng));
      if (testsupport::brute_distance(mesh, p) < 1e-4) continue;
      ++tested;
      agree += point_occupancy(bvh, p) == testsupport::winding_inside(mesh, p);
    }
    CHECK(agree >= 1998);
  }
}

TEST_CASE("parity is independent of ray direction away from the surface") {
  const auto mesh = make_torus(0.3, 0.12, 48, 24);
  const TriangleBvh bvh(mesh);
  Rng rng(99);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (testsupport::brute_distance(mesh, p) < 1e-3) continue;
    const bool ref = point_occupancy(bvh, p);
    for (int k = 0; k < 5; ++k) mismatches += point_occupancy_along(bvh, p, random_unit(rng)) != ref;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("query strategy names round trip") {
  for (auto s : {QueryStrategy::UniformCube, QueryStrategy::NoisySurface,
                 QueryStrategy::SphereShell})
    CHECK(query_strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(query_strategy_from_string("bogus"), Error);
}

TEST_CASE("default query spec") {
  const auto spec = QuerySpec::defaults();
  CHECK(spec.uniform_count == 100'000);
  CHECK(spec.padding == 0.1);
  REQUIRE(spec.noise_stds.size() == 10);
  CHECK(spec.noise_stds.front() == doctest::Approx(0.001));
  CHECK(spec.noise_stds.back() == doctest::Approx(0.25));
  CHECK(spec.noise_stds.size() * spec.points_per_std == 100'000);
  REQUIRE(spec.sphere_radii.size() == 5);
  CHECK(spec.sphere_radii.front() == doctest::Approx(0.6));
  CHECK(spec.sphere_radii.back() == doctest::Approx(std::sqrt(3.0)));
  CHECK(spec.sphere_radii.size() * spec.points_per_sphere == 100'000);
  for (std::size_t i = 1; i < spec.noise_stds.size(); ++i)
    CHECK(spec.noise_stds[i] / spec.noise_stds[i - 1] ==
          doctest::Approx(spec.noise_stds[1] / spec.noise_stds[0]));
}

TEST_CASE("query generation") {
  const auto cube = make_box(Vec3::Constant(-0.5), Vec3::Constant(0.5));
  const auto spec = QuerySpec::defaults();
  const auto sets = generate_query_points(cube, spec, 5);
  REQUIRE(sets.size() == 16);
  CHECK(sets[0].strategy == QueryStrategy::UniformCube);
  CHECK(sets[0].points.size() == 100'000);
  for (const auto& p : sets[0].points) CHECK(p.cwiseAbs().maxCoeff() <= 0.6);
  std::size_t noisy = 0, shell = 0;
  for (const auto& s : sets) {
    if (s.strategy == QueryStrategy::NoisySurface) noisy += s.points.size();
    if (s.strategy == QueryStrategy::SphereShell) {
      shell += s.points.size();
      for (const auto& p : s.points) CHECK(std::abs(p.norm() - s.parameter) < 1e-6);
    }
  }
  CHECK(noisy == 100'000);
  CHECK(shell == 100'000);

  SUBCASE("zero noise lies on the surface") {
    QuerySpec z;
    z.uniform_count = 0;
    z.noise_stds = {0.0};
    const auto s = generate_query_points(cube, z, 1);
    const TriangleBvh bvh(cube);
    for (const auto& p : s[1].points) CHECK(bvh.closest_point(p)->distance < 1e-9);
    const auto labeled = label_queries(bvh, s[1]);
    const auto inside = std::count(labeled.labels.begin(), labeled.labels.end(), 1);
    CHECK(inside > 0);
    CHECK(inside < static_cast<long>(labeled.labels.size()));
  }
  SUBCASE("sphere shell at 0.87") {
    QuerySpec z;
    z.uniform_count = 0;
    z.sphere_radii = {0.87};
    const auto s = generate_query_points(cube, z, 1);
    for (const auto& p : s[1].points) CHECK(std::abs(p.norm() - 0.87) < 1e-6);
    const auto labeled = label_queries(TriangleBvh(cube), s[1]);
    CHECK(std::count(labeled.labels.begin(), labeled.labels.end(), 1) == 0);
  }
  SUBCASE("unnormalized mesh rejected") {
    try {
      generate_query_points(make_box(Vec3::Zero(), Vec3::Ones()), spec, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Precondition);
    }
  }
}

TEST_CASE("query generation and labels are byte-deterministic") {
  const auto mesh = normalize_unit_cube(make_torus(0.3, 0.12, 32, 16)).first;
  const TriangleBvh bvh(mesh);
  QuerySpec spec = QuerySpec::defaults();
  spec.uniform_count = 5000;
  spec.points_per_std = 500;
  spec.points_per_sphere = 1000;
  auto run = [&](std::uint64_t seed, int jobs) {
    set_worker_count(jobs);
    auto sets = generate_query_points(mesh, spec, seed);
    for (auto& s : sets) s = label_queries(bvh, std::move(s));
    set_worker_count(1);
    return bytes_of(sets);
  };
  const auto a = run(8, 1);
  CHECK(a == run(8, 1));
  CHECK(a == run(8, 3));
  CHECK(a != run(9, 1));
}

TEST_CASE("labelled fraction of a centred box matches its volume") {
  QuerySpec spec;
  spec.uniform_count = 1'000'000;
  const auto cube = make_box(Vec3::Constant(-0.5), Vec3::Constant(0.5));
  auto u = generate_query_points(cube, spec, 17)[0];
  const TriangleBvh small(make_box(Vec3::Constant(-0.25), Vec3::Constant(0.25)));
  u = label_queries(small, std::move(u));
  const double frac =
      static_cast<double>(std::count(u.labels.begin(), u.labels.end(), 1)) / 1e6;
  CHECK(std::abs(frac - 0.125 / 1.728) < 0.001);
}

TEST_CASE("subsample and transform") {
  const auto cube = make_box(Vec3::Constant(-0.5), Vec3::Constant(0.5));
  const TriangleBvh bvh(cube);
  auto sets = generate_query_points(cube, QuerySpec::defaults(), 2);
  for (auto& s : sets) s = label_queries(bvh, std::move(s));
  const auto all = concatenate(sets);
  REQUIRE(all.points.size() == 300'000);
  REQUIRE(all.labeled());

  SUBCASE("2048 inside the unit cube") {
    const auto sub = subsample_transform(all, 2048, RigidScaleTransform::identity(), true, 4);
    CHECK(sub.points.size() == 2048);
    CHECK(sub.labels.size() == 2048);
    for (const auto& p : sub.points) CHECK(p.cwiseAbs().maxCoeff() <= 0.5);
  }
  SUBCASE("identity, no crop, full size is a permutation") {
    const auto sub = subsample_transform(sets[0], sets[0].points.size(),
                                         RigidScaleTransform::identity(), false, 4);
    auto key = [](const QueryPointSet& s) {
      std::multiset<std::tuple<double, double, double, int>> out;
      for (std::size_t i = 0; i < s.points.size(); ++i)
        out.emplace(s.points[i].x(), s.points[i].y(), s.points[i].z(), s.labels[i]);
      return out;
    };
    CHECK(key(sub) == key(sets[0]));
    CHECK(sub.points != sets[0].points);
  }
  SUBCASE("crop removes shell points outside the cube") {
    std::vector<QueryPointSet> shells(sets.begin() + 11, sets.end());
    const auto sh = concatenate(shells);
    std::size_t in_cube = 0;
    for (const auto& p : sh.points) in_cube += p.cwiseAbs().maxCoeff() <= 0.5;
    const auto sub = subsample_transform(sh, in_cube, RigidScaleTransform::identity(), true, 6);
    for (const auto& p : sub.points) {
      CHECK(p.cwiseAbs().maxCoeff() <= 0.5);
      CHECK(p.norm() <= std::sqrt(3.0) / 2 + 1e-12);
    }
    try {
      subsample_transform(sh, in_cube + 1, RigidScaleTransform::identity(), true, 6);
      FAIL("expected a shortage");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Shortage);
    }
  }
  SUBCASE("transform is applied before cropping") {
    RigidScaleTransform t;
    t.scale = Vec3::Constant(0.5);
    const auto sub = subsample_transform(sets[0], 1000, t, true, 8);
    for (const auto& p : sub.points) CHECK(p.cwiseAbs().maxCoeff() <= 0.3);
  }
}

}  // TEST_SUITE
