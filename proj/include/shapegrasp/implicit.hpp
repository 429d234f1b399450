#ifndef SHAPEGRASP_IMPLICIT_HPP
#define SHAPEGRASP_IMPLICIT_HPP

#include "shapegrasp/bvh.hpp"
#include "shapegrasp/sensor.hpp"

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace shapegrasp {

/// Batch occupancy-probability query. Implementations must be safe for
/// concurrent read-only use and return values in [0,1].
class ImplicitField {
 public:
  virtual ~ImplicitField() = default;
  virtual void query(std::span<const Vec3> points,
                     std::span<double> out) const = 0;

  std::vector<double> query(std::span<const Vec3> points) const;
  double operator()(const Vec3& p) const;
};

/// 1 inside, 0 outside, by point_occupancy.
class GroundTruthField : public ImplicitField {
 public:
  /// Throws ErrorKind::Precondition for a non-watertight mesh.
  explicit GroundTruthField(std::shared_ptr<const TriangleBvh> bvh);
  void query(std::span<const Vec3> points,
             std::span<double> out) const override;
  using ImplicitField::query;

 private:
  std::shared_ptr<const TriangleBvh> bvh_;
};

std::shared_ptr<GroundTruthField> ground_truth_field(
    std::shared_ptr<const TriangleBvh> bvh);

/// Wraps a scalar function; results are clamped to [0,1].
class FunctionField : public ImplicitField {
 public:
  explicit FunctionField(std::function<double(const Vec3&)> fn);
  void query(std::span<const Vec3> points,
             std::span<double> out) const override;
  using ImplicitField::query;

 private:
  std::function<double(const Vec3&)> fn_;
};

/// Regular sample lattice. Sample (i, j, k) sits at
/// origin + (index + 0.5) * voxel, i.e. at voxel centers. Storage is
/// row-major with x slowest and z fastest.
struct GridGeometry {
  Eigen::Vector3i resolution = Eigen::Vector3i::Zero();
  Vec3 origin = Vec3::Zero();
  Vec3 voxel = Vec3::Ones();

  std::size_t count() const {
    return static_cast<std::size_t>(resolution.x()) * resolution.y() *
           resolution.z();
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * resolution.y() + j) * resolution.z() +
           k;
  }
  Vec3 point(int i, int j, int k) const {
    return origin + (Vec3(i, j, k) + Vec3::Constant(0.5)).cwiseProduct(voxel);
  }
  /// Lattice covering `bounds` with `resolution` voxels per axis.
  static GridGeometry covering(const Eigen::AlignedBox3d& bounds,
                               const Eigen::Vector3i& resolution);
};

/// Scalar samples on a lattice. For occupancy grids values lie in [0,1].
struct ScalarGrid {
  GridGeometry geometry;
  std::vector<double> values;

  double at(int i, int j, int k) const {
    return values[geometry.index(i, j, k)];
  }
};
using OccupancyGrid = ScalarGrid;

/// Throws ErrorKind::InvalidArgument unless every resolution is >= 2.
OccupancyGrid evaluate_grid(const ImplicitField& field,
                            const Eigen::Vector3i& resolution,
                            const Eigen::AlignedBox3d& bounds);

struct MarchingCubesResult {
  TriangleMesh mesh;
  /// Set when iso is not strictly inside the sampled value range.
  bool empty = true;
};

/// Values above `iso` are inside; triangles face outward. Vertices are
/// shared between cells, so the result is watertight whenever the surface
/// stays off the outer layer of samples.
MarchingCubesResult marching_cubes(const ScalarGrid& grid, double iso);

/// Triangles (as edge-index triples, edges 0..11) for each of the 256 cube
/// configurations. Corner c has offset (c & 1, c >> 1 & 1, c >> 2 & 1);
/// bit c of the case index is set when corner c is inside.
const std::vector<std::vector<std::array<int, 3>>>& marching_cubes_table();
/// Corner pair of each cube edge.
const std::array<std::array<int, 2>, 12>& marching_cubes_edges();

struct TsdfVolume {
  GridGeometry geometry;
  double truncation = 0;
  std::vector<float> sdf;     // positive in front of surfaces
  std::vector<float> weight;  // 0 = never observed
  /// Set when some view saw the voxel in front of the measured surface (or
  /// through empty background when that counts as free space).
  std::vector<std::uint8_t> observed_free;

  TsdfVolume() = default;
  TsdfVolume(const GridGeometry& geometry, double truncation);
};

/// Projective running-average update. Voxels more than `truncation` behind
/// the measured depth are left untouched. With `background_is_free`, a
/// missing pixel marks the voxels along its ray as free space with sdf equal
/// to the truncation.
void tsdf_integrate(TsdfVolume& volume, const DepthImage& depth,
                    const PinholeCamera& camera,
                    bool background_is_free = false);

struct WatertightParams {
  int views = 100;
  int resolution = 256;
  double truncation_voxels = 3.0;
  /// Zero level sits this far (in voxels) from the input surface on the
  /// observed side, which closes zero-thickness walls.
  double offset_voxels = 0.6;
  /// Largest pixel footprint on the grid, in voxels.
  double pixel_footprint_voxels = 0.8;
  /// Far cameras keep the image small for a given footprint.
  double camera_distance = 8.0;  // in normalized units
};

/// Closed surface around any triangle soup: renders depth views from a
/// sphere of cameras, fuses them into a visibility volume and extracts the
/// offset surface. Output is in the input's frame.
/// Throws ErrorKind::EmptyGeometry for an empty input.
TriangleMesh make_watertight(const TriangleMesh& mesh,
                             const WatertightParams& params = {});
TriangleMesh make_watertight(const TriangleMesh& mesh, int n_views,
                             int resolution);

/// Directions of a spherical Fibonacci lattice, n >= 1.
std::vector<Vec3> fibonacci_sphere(std::size_t n);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_IMPLICIT_HPP
