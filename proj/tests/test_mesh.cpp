#include "support.hpp"

#include "shapegrasp/io.hpp"
#include "shapegrasp/mesh.hpp"

#include <doctest.h>

#include <fstream>
#include <map>
#include <numeric>

using namespace shapegrasp;
using testsupport::scratch_dir;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Union-find over shared undirected edges.
std::vector<int> brute_components(const TriangleMesh& mesh) {
  const std::size_t n = mesh.triangle_count();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      int shared = 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          shared += mesh.triangles()[a][i] == mesh.triangles()[b][j];
      if (shared >= 2) parent[find(a)] = find(b);
    }
  std::map<std::size_t, int> label;
  std::vector<int> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto root = find(t);
    if (!label.count(root)) label[root] = static_cast<int>(label.size());
    out[t] = label[root];
  }
  return out;
}

TriangleMesh unit_square() {
  return TriangleMesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)},
                      {Vec3i(0, 1, 2), Vec3i(0, 2, 3)});
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("construction rejects bad indices and non-finite coordinates") {
  CHECK_THROWS_AS(TriangleMesh({Vec3::Zero()}, {Vec3i(0, 0, 1)}), Error);
  CHECK_THROWS_AS(
      TriangleMesh({Vec3(NAN, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {Vec3i(0, 1, 2)}),
      Error);
}

TEST_CASE("OFF tetrahedron loads with four triangles") {
  const auto dir = scratch_dir("mesh_off");
  write_file(dir / "t.off",
             "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
             "3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n");
  const auto mesh = load_mesh(dir / "t.off");
  CHECK(mesh.triangle_count() == 4);
  CHECK(mesh.vertex_count() == 4);
  CHECK(is_watertight(mesh));
}

TEST_CASE("OBJ with one zero-area face among twelve keeps eleven") {
  const auto box = make_box(Vec3::Zero(), Vec3::Ones());
  REQUIRE(box.triangle_count() == 12);
  std::string text;
  for (const auto& v : box.vertices())
    text += "v " + std::to_string(v.x()) + " " + std::to_string(v.y()) + " " +
            std::to_string(v.z()) + "\n";
  for (std::size_t t = 0; t < 11; ++t) {
    const auto& f = box.triangles()[t];
    text += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " +
            std::to_string(f[2] + 1) + "\n";
  }
  text += "f 1 1 2\n";  // zero area
  const auto dir = scratch_dir("mesh_obj");
  write_file(dir / "b.obj", text);
  CHECK(load_mesh(dir / "b.obj").triangle_count() == 11);
}

TEST_CASE("OBJ polygons, negative indices and texture/normal refs") {
  const auto dir = scratch_dir("mesh_obj_poly");
  write_file(dir / "q.obj",
             "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\n"
             "f -4/1/1 -3/2/1 -2/3/1 -1/4/1\n");
  const auto mesh = load_mesh(dir / "q.obj");
  CHECK(mesh.triangle_count() == 2);
  CHECK(mesh.total_area() == doctest::Approx(1.0));
}

TEST_CASE("malformed files report the offending line") {
  const auto dir = scratch_dir("mesh_bad");
  write_file(dir / "bad.off", "OFF\n3 1 0\n0 0 0\n1 0 zero\n0 1 0\n3 0 1 2\n");
  try {
    load_mesh(dir / "bad.off");
    FAIL("expected a malformed-file error");
  } catch (const MalformedFileError& e) {
    CHECK(e.kind() == ErrorKind::MalformedFile);
    CHECK(e.line() == 4);
  }

  write_file(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
  try {
    load_mesh(dir / "bad.obj");
    FAIL("expected a malformed-file error");
  } catch (const MalformedFileError& e) {
    CHECK(e.line() == 4);
  }

  write_file(dir / "trunc.ply", "ply\nformat ascii 1.0\nelement vertex 3\n");
  CHECK_THROWS_AS(load_mesh(dir / "trunc.ply"), MalformedFileError);

  write_file(dir / "short.ply",
             "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\n"
             "property float y\nproperty float z\nelement face 1\n"
             "property list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n");
  CHECK_THROWS_AS(load_mesh(dir / "short.ply"), MalformedFileError);
}

TEST_CASE("empty mesh file is an empty-geometry error") {
  const auto dir = scratch_dir("mesh_empty");
  write_file(dir / "e.off", "OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n");
  try {
    load_mesh(dir / "e.off");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyGeometry);
  }
}

TEST_CASE("round trip through every format") {
  const auto mesh = make_icosphere(Vec3(0.1, 0.2, 0.3), 0.7, 2);
  const auto dir = scratch_dir("mesh_rt");
  for (const char* name : {"s.off", "s.obj", "s.ply"}) {
    save_mesh(mesh, dir / name);
    const auto back = load_mesh(dir / name);
    REQUIRE(back.triangle_count() == mesh.triangle_count());
    REQUIRE(back.vertex_count() == mesh.vertex_count());
    double err = 0;
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
      err = std::max(err, (back.vertices()[i] - mesh.vertices()[i]).norm());
    CHECK(err < 1e-6);
    CHECK(back.triangles() == mesh.triangles());
  }
}

TEST_CASE("ascii PLY with extra properties loads") {
  const auto dir = scratch_dir("mesh_ply_ascii");
  write_file(dir / "a.ply",
             "ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\n"
             "property float y\nproperty float z\nproperty uchar red\n"
             "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
             "0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 2\n");
  const auto mesh = load_mesh(dir / "a.ply");
  CHECK(mesh.triangle_count() == 1);
  CHECK(mesh.total_area() == doctest::Approx(0.5));
}

TEST_CASE("normalize: analytic boxes") {
  SUBCASE("[0,2]^3") {
    const auto [m, t] = normalize_unit_cube(make_box(Vec3::Zero(), Vec3::Constant(2)));
    CHECK((t.scale - Vec3::Constant(0.5)).norm() < 1e-12);
    CHECK((t.translation - Vec3::Constant(-1)).norm() < 1e-12);
    const auto b = m.bounds();
    CHECK((b.min() - Vec3::Constant(-0.5)).norm() < 1e-12);
    CHECK((b.max() - Vec3::Constant(0.5)).norm() < 1e-12);
  }
  SUBCASE("already normalized") {
    const auto [m, t] =
        normalize_unit_cube(make_box(Vec3::Constant(-0.5), Vec3::Constant(0.5)));
    CHECK(std::abs(t.scale.x() - 1) < 1e-9);
    CHECK(t.translation.norm() < 1e-9);
  }
  SUBCASE("2 x 1 x 0.5") {
    const auto [m, t] = normalize_unit_cube(make_box(Vec3(3, 3, 3), Vec3(5, 4, 3.5)));
    const Vec3 size = m.bounds().sizes();
    CHECK(size.x() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(size.y() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(size.z() == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(m.bounds().center().norm() < 1e-12);
  }
  SUBCASE("zero extent") {
    const std::vector<Vec3> pts(4, Vec3(1, 1, 1));
    try {
      unit_cube_transform(pts);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateGeometry);
    }
  }
}

TEST_CASE("transform composes with its inverse to identity") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(-3, 3), s(0.1, 4);
  for (int i = 0; i < 100; ++i) {
    RigidScaleTransform t;
    t.translation = Vec3(u(rng), u(rng), u(rng));
    t.scale = Vec3(s(rng), s(rng), s(rng));
    const auto id = t.inverse().compose(t);
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK((id.apply(p) - p).norm() < 1e-9);
    CHECK((t.apply_inverse(t.apply(p)) - p).norm() < 1e-9);
    const auto id2 = t.compose(t.inverse());
    CHECK((id2.apply(p) - p).norm() < 1e-9);
  }
}

TEST_CASE("components match brute-force labeling") {
  const auto sphere = make_icosphere(Vec3::Zero(), 1, 3);
  const auto cube = make_box(Vec3::Constant(3), Vec3::Constant(3.1));
  const auto both = merge(sphere, cube);
  CHECK(triangle_components(both) == brute_components(both));

  SUBCASE("floating cube removed") {
    REQUIRE(sphere.triangle_count() == 1280);
    const auto small = make_uv_sphere(Vec3::Zero(), 1, 16, 32);
    const auto m = merge(small, cube);
    const auto kept = remove_small_components(m, 0.05);
    CHECK(kept.triangle_count() == small.triangle_count());
    CHECK(kept.bounds().max().x() < 2);
  }
  SUBCASE("single component unchanged") {
    const auto kept = remove_small_components(sphere, 0.05);
    CHECK(kept.triangles() == sphere.triangles());
    CHECK(kept.vertices() == sphere.vertices());
  }
  SUBCASE("two equal halves, fraction 0.6") {
    const auto a = make_box(Vec3::Zero(), Vec3::Ones());
    const auto b = make_box(Vec3::Constant(2), Vec3::Constant(3));
    const auto m = merge(a, b);
    const auto labels = brute_components(m);
    // Both halves fall below the threshold; only the lower-index one stays.
    std::size_t first = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) first += labels[t] == labels[0];
    const auto kept = remove_small_components(m, 0.6);
    CHECK(kept.triangle_count() == first);
    CHECK(kept.bounds().max().x() == doctest::Approx(1.0));
  }
}

TEST_CASE("watertight predicate") {
  const auto tet = make_tetrahedron();
  CHECK(is_watertight(tet));
  CHECK_FALSE(is_watertight(TriangleMesh(
      tet.vertices(), {tet.triangles()[0], tet.triangles()[1], tet.triangles()[2]})));
  CHECK_FALSE(is_watertight(TriangleMesh()));

  // Two tetrahedra sharing only a vertex.
  std::vector<Vec3> v = tet.vertices();
  std::vector<Vec3i> f = tet.triangles();
  const int base = static_cast<int>(v.size());
  for (int i = 1; i < 4; ++i) v.push_back(-tet.vertices()[static_cast<std::size_t>(i)]);
  auto remap = [&](int idx) { return idx == 0 ? 0 : base + idx - 1; };
  for (const auto& t : tet.triangles()) f.emplace_back(remap(t[0]), remap(t[2]), remap(t[1]));
  REQUIRE(tet.vertices()[0].norm() == 0);
  CHECK(is_watertight(TriangleMesh(v, f)));

  // Same edge twice in one direction.
  const auto flipped = TriangleMesh(
      tet.vertices(), {tet.triangles()[0], tet.triangles()[1], tet.triangles()[2],
                       Vec3i(tet.triangles()[3][0], tet.triangles()[3][2],
                             tet.triangles()[3][1])});
  CHECK_FALSE(is_watertight(flipped));
}

TEST_CASE("analytic shapes are closed with the expected Euler characteristic") {
  for (const auto& [name, mesh] : testsupport::closed_meshes()) {
    CAPTURE(name);
    CHECK(is_watertight(mesh));
    CHECK(euler_characteristic(mesh) == (name == "torus" ? 0 : 2));
    // Outward orientation: positive signed volume.
    double vol = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
      vol += mesh.corner(t, 0).dot(mesh.corner(t, 1).cross(mesh.corner(t, 2))) / 6;
    CHECK(vol > 0);
  }
}

TEST_CASE("decimation keeps closed meshes closed") {
  const auto sphere = make_uv_sphere(Vec3::Zero(), 1, 51, 100);
  REQUIRE(sphere.triangle_count() >= 9800);
  const auto res = decimate(sphere, 0.05);
  CHECK(res.mesh.triangle_count() <= sphere.triangle_count() / 20);
  CHECK(is_watertight(res.mesh));
  CHECK(euler_characteristic(res.mesh) == 2);
  for (const auto& v : res.mesh.vertices()) CHECK(v.norm() == doctest::Approx(1).epsilon(0.1));

  const auto torus = make_torus(0.5, 0.2, 64, 32);
  const auto rt = decimate(torus, 0.1);
  CHECK(is_watertight(rt.mesh));
  CHECK(euler_characteristic(rt.mesh) == 0);

  SUBCASE("target 1 is the identity") {
    const auto same = decimate(sphere, 1.0);
    CHECK(same.mesh.triangles() == sphere.triangles());
    CHECK(same.mesh.vertices() == sphere.vertices());
  }
  SUBCASE("tetrahedron cannot shrink") {
    const auto tet = make_tetrahedron();
    const auto r = decimate(tet, 0.05);
    CHECK(r.target_not_reached);
    CHECK(r.mesh.triangle_count() == 4);
    CHECK(is_watertight(r.mesh));
  }
}

TEST_CASE("surface sampling is area weighted") {
  SUBCASE("unit square halves") {
    std::vector<std::size_t> tri;
    const auto pts = sample_surface(unit_square(), 100'000, 11, tri);
    const auto c0 = std::count(tri.begin(), tri.end(), 0u);
    CHECK(std::abs(static_cast<double>(c0) / 1e5 - 0.5) < 0.01);
    for (const auto& p : pts) {
      CHECK(p.z() == 0);
      CHECK(p.x() >= 0);
      CHECK(p.x() <= 1);
    }
  }
  SUBCASE("areas 9:1") {
    const TriangleMesh m({Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0), Vec3(10, 0, 0),
                          Vec3(11, 0, 0), Vec3(10, 1, 0)},
                         {Vec3i(0, 1, 2), Vec3i(3, 4, 5)});
    std::vector<std::size_t> tri;
    sample_surface(m, 100'000, 12, tri);
    const auto c0 = std::count(tri.begin(), tri.end(), 0u);
    CHECK(std::abs(static_cast<double>(c0) / 1e5 - 0.9) < 0.01);
  }
  SUBCASE("single sample lies on its triangle") {
    const auto box = make_box(Vec3(-1, -2, -3), Vec3(1, 2, 3));
    std::vector<std::size_t> tri;
    const auto p = sample_surface(box, 1, 5, tri);
    REQUIRE(p.size() == 1);
    const Vec3 q = closest_point_on_triangle(p[0], box.corner(tri[0], 0),
                                             box.corner(tri[0], 1), box.corner(tri[0], 2));
    CHECK((q - p[0]).norm() < 1e-9);
  }
  SUBCASE("deterministic per seed") {
    const auto s = make_icosphere(Vec3::Zero(), 1, 2);
    CHECK(sample_surface(s, 1000, 3) == sample_surface(s, 1000, 3));
    CHECK(sample_surface(s, 1000, 3) != sample_surface(s, 1000, 4));
  }
}

TEST_CASE("weld and compact") {
  // Two triangles with duplicated shared vertices.
  const TriangleMesh m({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0),
                        Vec3(1, 1, 0), Vec3(0, 1, 0), Vec3(9, 9, 9)},
                       {Vec3i(0, 1, 2), Vec3i(3, 4, 5)});
  const auto w = weld_vertices(m);
  CHECK(w.vertex_count() <= 5);
  CHECK(compact_vertices(w).vertex_count() == 4);
  CHECK(w.total_area() == doctest::Approx(1.0));
}

}  // TEST_SUITE
