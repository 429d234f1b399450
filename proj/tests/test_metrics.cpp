#include "support.hpp"

#include "shapegrasp/io.hpp"
#include "shapegrasp/metrics.hpp"

#include <doctest.h>

using namespace shapegrasp;

namespace {

OccupancyFn box_fn(const Vec3& lo, const Vec3& hi) {
  return [lo, hi](std::span<const Vec3> pts) {
    std::vector<std::uint8_t> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
      out[i] = (pts[i].array() >= lo.array()).all() && (pts[i].array() <= hi.array()).all();
    return out;
  };
}

double brute_nn(const Vec3& p, std::span<const Vec3> set) {
  double best = 1e300;
  for (const auto& q : set) best = std::min(best, (p - q).norm());
  return best;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng);
    out.emplace_back(x, y, z);
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("unit cube samples are uniform and deterministic") {
  const auto a = unit_cube_samples(10'000, 4);
  CHECK(a == unit_cube_samples(10'000, 4));
  for (const auto& p : a) CHECK(p.cwiseAbs().maxCoeff() <= 0.5);
  std::vector<double> xs;
  for (const auto& p : a) xs.push_back(p.y());
  CHECK(testsupport::ks_pvalue(xs, [](double x) { return std::clamp(x + 0.5, 0.0, 1.0); }) > 0.001);
}

TEST_CASE("volumetric IoU on overlapping boxes") {
  const auto a = box_fn(Vec3(-0.5, -0.5, -0.5), Vec3(1.0 / 6, 0.5, 0.5));
  const auto b = box_fn(Vec3(-1.0 / 6, -0.5, -0.5), Vec3(0.5, 0.5, 0.5));
  const auto r = volumetric_metrics(a, b, 1'000'000, 1);
  CHECK(std::abs(r.iou - 1.0 / 3) <= 0.005);
  CHECK(r.precision == doctest::Approx(0.5).epsilon(0.01));
  CHECK(r.recall == doctest::Approx(0.5).epsilon(0.01));
  CHECK(r.f1 == doctest::Approx(2 * r.precision * r.recall / (r.precision + r.recall)));
  CHECK(r.samples == 1'000'000);
}

TEST_CASE("volumetric identity and disjoint cases") {
  const auto bvh = std::make_shared<const TriangleBvh>(make_torus(0.3, 0.12, 32, 16));
  const auto same = volumetric_metrics(mesh_occupancy(bvh), mesh_occupancy(bvh), 200'000, 2);
  CHECK(same.iou == 1.0);
  CHECK(same.f1 == 1.0);

  const auto gt = box_fn(Vec3::Constant(-0.5), Vec3::Constant(0));
  const auto far = box_fn(Vec3::Constant(0.1), Vec3::Constant(0.5));
  const auto d = volumetric_metrics(gt, far, 100'000, 3);
  CHECK(d.iou == 0.0);
  CHECK(d.precision == 0.0);
  CHECK(d.f1 == 0.0);

  const auto none = box_fn(Vec3::Constant(2), Vec3::Constant(3));
  const auto e = volumetric_metrics(gt, none, 100'000, 3);
  CHECK(e.precision == 0.0);
  CHECK(e.recall == 0.0);
  try {
    volumetric_metrics(none, gt, 100'000, 3);
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::UndefinedMetric);
  }
}

TEST_CASE("labels give the expected confusion ratios") {
  const std::vector<std::uint8_t> gt{1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<std::uint8_t> pr{1, 1, 0, 0, 1, 0, 0, 0};
  const auto r = volumetric_from_labels(gt, pr);
  CHECK(r.iou == doctest::Approx(2.0 / 5));
  CHECK(r.precision == doctest::Approx(2.0 / 3));
  CHECK(r.recall == doctest::Approx(0.5));
}

TEST_CASE("field occupancy thresholds") {
  auto f = std::make_shared<FunctionField>([](const Vec3& p) { return p.x() + 0.5; });
  const std::vector<Vec3> pts{Vec3(-0.2, 0, 0), Vec3(0, 0, 0), Vec3(0.2, 0, 0)};
  CHECK(field_occupancy(f)(pts) == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(field_occupancy(f, 0.7)(pts) == std::vector<std::uint8_t>{0, 0, 1});
}

TEST_CASE("nearest neighbours and Chamfer match brute force") {
  const auto a = random_points(1000, 1), b = random_points(1000, 2);
  NearestNeighbors nn(b);
  double ab = 0, ba = 0;
  for (const auto& p : a) {
    const double ref = brute_nn(p, b);
    CHECK(nn.distance(p) == ref);
    ab += ref;
  }
  for (const auto& p : b) ba += brute_nn(p, a);
  CHECK(chamfer_l1(a, b) == doctest::Approx(0.5 * (ab / 1000 + ba / 1000)).epsilon(1e-14));
  CHECK(chamfer_l1(a, b) == chamfer_l1(b, a));
  CHECK(chamfer_l1(a, a) == 0.0);
  const std::vector<Vec3> p{Vec3(0, 0, 0)}, q{Vec3(0.3, 0.4, 0)};
  CHECK(chamfer_l1(p, q) == doctest::Approx(0.5));
  const std::vector<Vec3> empty;
  try {
    chamfer_l1(empty, a);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyGeometry);
  }
}

TEST_CASE("surface F-score") {
  const auto a = random_points(2000, 5);
  const auto same = surface_fscore(a, a, 0.01);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  // Sparse grid (spacing 0.1) shifted by 2 tau.
  std::vector<Vec3> grid, shifted;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) {
        grid.emplace_back(0.1 * i, 0.1 * j, 0.1 * k);
        shifted.push_back(grid.back() + Vec3(0.02, 0, 0));
      }
  const auto s = surface_fscore(grid, shifted, 0.01);
  CHECK(s.precision == 0.0);
  CHECK(s.recall == 0.0);
  CHECK(s.f1 == 0.0);
  CHECK(s.chamfer_l1 == doctest::Approx(0.02));

  // Prediction = first half of a.
  const std::vector<Vec3> half(a.begin(), a.begin() + 1000);
  const auto h = surface_fscore(a, half, 0.05);
  CHECK(h.precision == 1.0);
  std::size_t covered = 0;
  for (const auto& p : a) covered += brute_nn(p, half) <= 0.05;
  CHECK(h.recall == doctest::Approx(static_cast<double>(covered) / 2000));
}

TEST_CASE("metric table and JSON") {
  std::vector<MetricRow> rows(2);
  rows[0].model = "ground truth";
  rows[0].volumetric = VolumetricReport{1, 1, 1, 1, 100, 0};
  rows[0].surface = SurfaceReport{0, 1, 1, 1, 0.01};
  rows[1].model = "x";
  rows[1].surface = SurfaceReport{0.25, 0.5, 0.4, 0.6, 0.01};
  const auto table = format_metric_table(rows);
  for (const char* col : {"Model", "IoU", "F1", "Precision", "Recall", "CD"})
    CHECK(table.find(col) != std::string::npos);
  CHECK(table.find("ground truth") != std::string::npos);
  const auto j = Json::parse(metric_rows_json(rows));
  REQUIRE(j.is_array());
  CHECK(j.size() == 2);
  CHECK(j[1]["model"] == "x");
}

}  // TEST_SUITE
