#ifndef SHAPEGRASP_OCCUPANCY_HPP
#define SHAPEGRASP_OCCUPANCY_HPP

#include "shapegrasp/bvh.hpp"

#include <span>
#include <string>
#include <vector>

namespace shapegrasp {

/// Inside test by ray-crossing parity. Rays that graze an edge or vertex are
/// re-cast along the next direction of a fixed list.
/// Throws ErrorKind::Precondition when the BVH mesh is not watertight.
bool point_occupancy(const TriangleBvh& bvh, const Vec3& p);

/// Parity along one explicit direction, no grazing fallback. Used to check
/// direction independence.
bool point_occupancy_along(const TriangleBvh& bvh, const Vec3& p,
                           const Vec3& direction);

std::vector<std::uint8_t> occupancy(const TriangleBvh& bvh,
                                    std::span<const Vec3> points);

enum class QueryStrategy { UniformCube, NoisySurface, SphereShell };

const char* to_string(QueryStrategy s);
QueryStrategy query_strategy_from_string(const std::string& s);

struct QueryPointSet {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> labels;  // empty until labeled
  QueryStrategy strategy = QueryStrategy::UniformCube;
  /// Noise std for NoisySurface, radius for SphereShell, padding for
  /// UniformCube.
  double parameter = 0;
  std::uint64_t seed = 0;

  bool labeled() const { return labels.size() == points.size(); }
};

struct QuerySpec {
  std::size_t uniform_count = 100'000;
  double padding = 0.1;
  std::vector<double> noise_stds;      // default: 10 log-spaced in [0.001, 0.25]
  std::size_t points_per_std = 10'000;
  std::vector<double> sphere_radii;    // default: 5 log-spaced in [0.6, sqrt 3]
  std::size_t points_per_sphere = 20'000;

  static QuerySpec defaults();
};

std::vector<double> log_spaced(double lo, double hi, int count);

/// Throws ErrorKind::Precondition unless the mesh is centered with longest
/// side 1 (tolerance 1e-6).
void require_normalized(const TriangleMesh& mesh);

std::vector<QueryPointSet> generate_query_points(const TriangleMesh& mesh,
                                                 const QuerySpec& spec,
                                                 std::uint64_t seed);

QueryPointSet label_queries(const TriangleBvh& bvh, QueryPointSet qps);

/// Applies `transform`, discards points outside the unit cube [-0.5, 0.5]^3
/// when `crop_cube`, then draws a uniform random subset of size n without
/// replacement (order randomized). Throws ErrorKind::Shortage when fewer
/// than n points survive.
QueryPointSet subsample_transform(const QueryPointSet& qps, std::size_t n,
                                  const RigidScaleTransform& transform,
                                  bool crop_cube, std::uint64_t seed);

/// Concatenates labeled sets; strategy of the result is the first set's.
QueryPointSet concatenate(std::span<const QueryPointSet> sets);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_OCCUPANCY_HPP
