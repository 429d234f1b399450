#include "shapegrasp/occupancy.hpp"

#include "shapegrasp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shapegrasp {

namespace {

// Fixed, generic directions; none is parallel to a coordinate plane.
const Vec3 kRayDirections[] = {
    Vec3(0.5773502691896258, 0.5812381937190965, 0.5735393346764044),
    Vec3(-0.3123264871362541, 0.8714281237542217, 0.3782164125934521),
    Vec3(0.7213421452145253, -0.2831542672345821, -0.6320219821247714),
    Vec3(-0.6521314823451259, -0.5021325612378216, 0.5680121347129839),
    Vec3(0.1204561233541203, -0.9402151263491278, 0.3186528123945213),
};

constexpr double kGrazeEps = 1e-9;

enum class Parity { Inside, Outside, Grazing };

Parity cast_parity(const TriangleBvh& bvh, const Vec3& p, const Vec3& dir,
                   bool detect_grazing) {
  const auto hits = bvh.all_hits(p, dir, 0.0);
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const auto& h = hits[i];
    if (detect_grazing) {
      if (h.u < kGrazeEps || h.v < kGrazeEps || h.u + h.v > 1 - kGrazeEps)
        return Parity::Grazing;
      const Vec3 n = bvh.mesh().normal(h.tri);
      if (std::abs(n.dot(dir)) < 1e-9) return Parity::Grazing;
    }
    ++crossings;
  }
  return (crossings % 2 == 1) ? Parity::Inside : Parity::Outside;
}

}  // namespace

bool point_occupancy_along(const TriangleBvh& bvh, const Vec3& p,
                           const Vec3& direction) {
  if (!bvh.watertight())
    throw Error(ErrorKind::Precondition,
                "point occupancy requires a watertight mesh");
  return cast_parity(bvh, p, direction.normalized(), false) == Parity::Inside;
}

bool point_occupancy(const TriangleBvh& bvh, const Vec3& p) {
  if (!bvh.watertight())
    throw Error(ErrorKind::Precondition,
                "point occupancy requires a watertight mesh");
  int inside_votes = 0, votes = 0;
  for (const Vec3& dir : kRayDirections) {
    const Parity r = cast_parity(bvh, p, dir, true);
    if (r != Parity::Grazing) return r == Parity::Inside;
    // Keep a vote in case every direction grazes.
    inside_votes += cast_parity(bvh, p, dir, false) == Parity::Inside;
    ++votes;
  }
  return 2 * inside_votes > votes;
}

std::vector<std::uint8_t> occupancy(const TriangleBvh& bvh,
                                    std::span<const Vec3> points) {
  if (!bvh.watertight())
    throw Error(ErrorKind::Precondition,
                "point occupancy requires a watertight mesh");
  std::vector<std::uint8_t> out(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    out[i] = point_occupancy(bvh, points[i]) ? 1 : 0;
  });
  return out;
}

const char* to_string(QueryStrategy s) {
  switch (s) {
    case QueryStrategy::UniformCube: return "uniform_cube";
    case QueryStrategy::NoisySurface: return "noisy_surface";
    case QueryStrategy::SphereShell: return "sphere_shell";
  }
  return "unknown";
}

QueryStrategy query_strategy_from_string(const std::string& s) {
  if (s == "uniform_cube") return QueryStrategy::UniformCube;
  if (s == "noisy_surface") return QueryStrategy::NoisySurface;
  if (s == "sphere_shell") return QueryStrategy::SphereShell;
  throw Error(ErrorKind::InvalidArgument, "unknown query strategy " + s);
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> out;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i)
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  out.front() = lo;
  out.back() = hi;
  return out;
}

QuerySpec QuerySpec::defaults() {
  QuerySpec spec;
  spec.noise_stds = log_spaced(0.001, 0.25, 10);
  spec.sphere_radii = log_spaced(0.6, std::sqrt(3.0), 5);
  return spec;
}

void require_normalized(const TriangleMesh& mesh) {
  if (mesh.empty())
    throw Error(ErrorKind::Precondition, "mesh is empty");
  const auto box = mesh.bounds();
  if (std::abs(box.sizes().maxCoeff() - 1.0) > 1e-6 ||
      box.center().cwiseAbs().maxCoeff() > 1e-6)
    throw Error(ErrorKind::Precondition,
                "mesh must be normalized (centered, longest side 1)");
}

std::vector<QueryPointSet> generate_query_points(const TriangleMesh& mesh,
                                                 const QuerySpec& spec,
                                                 std::uint64_t seed) {
  require_normalized(mesh);
  std::vector<QueryPointSet> sets;

  {
    QueryPointSet u;
    u.strategy = QueryStrategy::UniformCube;
    u.parameter = spec.padding;
    u.seed = derive_seed(seed, 1, 0);
    const double half = 0.5 + spec.padding;
    Rng rng(u.seed);
    std::uniform_real_distribution<double> uni(-half, half);
    u.points.reserve(spec.uniform_count);
    for (std::size_t i = 0; i < spec.uniform_count; ++i) {
      const double x = uni(rng), y = uni(rng), z = uni(rng);
      u.points.emplace_back(x, y, z);
    }
    sets.push_back(std::move(u));
  }

  for (std::size_t k = 0; k < spec.noise_stds.size(); ++k) {
    QueryPointSet s;
    s.strategy = QueryStrategy::NoisySurface;
    s.parameter = spec.noise_stds[k];
    s.seed = derive_seed(seed, 2, k);
    s.points = sample_surface(mesh, spec.points_per_std, s.seed);
    if (s.parameter > 0) {
      Rng rng(derive_seed(s.seed, 1));
      std::normal_distribution<double> noise(0.0, s.parameter);
      for (auto& p : s.points) {
        const double x = noise(rng), y = noise(rng), z = noise(rng);
        p += Vec3(x, y, z);
      }
    }
    sets.push_back(std::move(s));
  }

  for (std::size_t k = 0; k < spec.sphere_radii.size(); ++k) {
    QueryPointSet s;
    s.strategy = QueryStrategy::SphereShell;
    s.parameter = spec.sphere_radii[k];
    s.seed = derive_seed(seed, 3, k);
    Rng rng(s.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    s.points.reserve(spec.points_per_sphere);
    while (s.points.size() < spec.points_per_sphere) {
      const double x = gauss(rng), y = gauss(rng), z = gauss(rng);
      const Vec3 d(x, y, z);
      const double len = d.norm();
      if (len < 1e-12) continue;
      s.points.push_back(d * (s.parameter / len));
    }
    sets.push_back(std::move(s));
  }
  return sets;
}

QueryPointSet label_queries(const TriangleBvh& bvh, QueryPointSet qps) {
  qps.labels = occupancy(bvh, qps.points);
  return qps;
}

QueryPointSet subsample_transform(const QueryPointSet& qps, std::size_t n,
                                  const RigidScaleTransform& transform,
                                  bool crop_cube, std::uint64_t seed) {
  std::vector<std::size_t> survivors;
  std::vector<Vec3> moved(qps.points.size());
  for (std::size_t i = 0; i < qps.points.size(); ++i) {
    moved[i] = transform.apply(qps.points[i]);
    if (!crop_cube || moved[i].cwiseAbs().maxCoeff() <= 0.5)
      survivors.push_back(i);
  }
  if (survivors.size() < n)
    throw Error(ErrorKind::Shortage,
                "only " + std::to_string(survivors.size()) +
                    " query points survive the crop, " + std::to_string(n) +
                    " requested");
  // Partial Fisher-Yates.
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, survivors.size() - 1);
    std::swap(survivors[i], survivors[pick(rng)]);
  }
  QueryPointSet out;
  out.strategy = qps.strategy;
  out.parameter = qps.parameter;
  out.seed = seed;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.points.push_back(moved[survivors[i]]);
    if (qps.labeled()) out.labels.push_back(qps.labels[survivors[i]]);
  }
  return out;
}

QueryPointSet concatenate(std::span<const QueryPointSet> sets) {
  QueryPointSet out;
  if (sets.empty()) return out;
  out.strategy = sets.front().strategy;
  out.parameter = sets.front().parameter;
  out.seed = sets.front().seed;
  bool labeled = true;
  for (const auto& s : sets) labeled = labeled && s.labeled();
  for (const auto& s : sets) {
    out.points.insert(out.points.end(), s.points.begin(), s.points.end());
    if (labeled) out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
  }
  return out;
}

}  // namespace shapegrasp
