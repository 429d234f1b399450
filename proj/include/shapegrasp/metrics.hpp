#ifndef SHAPEGRASP_METRICS_HPP
#define SHAPEGRASP_METRICS_HPP

#include "shapegrasp/bvh.hpp"
#include "shapegrasp/implicit.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shapegrasp {

/// Batch inside/outside predicate.
using OccupancyFn =
    std::function<std::vector<std::uint8_t>(std::span<const Vec3>)>;

OccupancyFn mesh_occupancy(std::shared_ptr<const TriangleBvh> bvh);
/// Field value >= threshold counts as inside.
OccupancyFn field_occupancy(std::shared_ptr<const ImplicitField> field,
                            double threshold = 0.5);

struct VolumetricReport {
  double iou = 0, f1 = 0, precision = 0, recall = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// n points uniform in [-0.5, 0.5]^3, from a counter-based generator.
std::vector<Vec3> unit_cube_samples(std::size_t n, std::uint64_t seed);

/// `ground_truth` and `prediction` evaluated on the same sample.
/// Throws ErrorKind::UndefinedMetric when no sample is inside the ground
/// truth. Precision is 0 for an empty prediction.
VolumetricReport volumetric_metrics(const OccupancyFn& ground_truth,
                                    const OccupancyFn& prediction,
                                    std::size_t n, std::uint64_t seed);
VolumetricReport volumetric_from_labels(std::span<const std::uint8_t> gt,
                                        std::span<const std::uint8_t> pred);

/// Exact nearest-neighbor distances over a fixed point set (R-tree).
class NearestNeighbors {
 public:
  explicit NearestNeighbors(std::span<const Vec3> points);
  ~NearestNeighbors();
  NearestNeighbors(NearestNeighbors&&) noexcept;
  NearestNeighbors& operator=(NearestNeighbors&&) noexcept;

  double distance(const Vec3& p) const;
  std::vector<double> distances(std::span<const Vec3> queries) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Half the sum of the two mean nearest-neighbor distances (unsquared).
/// Throws ErrorKind::EmptyGeometry when either set is empty.
double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b);

inline constexpr double kDefaultFscoreThreshold = 0.01;

struct SurfaceReport {
  double chamfer_l1 = 0;
  double f1 = 0, precision = 0, recall = 0;
  double tau = kDefaultFscoreThreshold;
};

/// `a` is the ground truth, `b` the prediction. precision: share of b within
/// tau of a; recall: share of a within tau of b. Also fills chamfer_l1.
SurfaceReport surface_fscore(std::span<const Vec3> a, std::span<const Vec3> b,
                             double tau = kDefaultFscoreThreshold);

struct MetricRow {
  std::string model;
  std::optional<VolumetricReport> volumetric;
  std::optional<SurfaceReport> surface;
};

/// Aligned text table: Model, IoU, F1, Precision, Recall, CD.
std::string format_metric_table(std::span<const MetricRow> rows);
/// JSON text for the same rows.
std::string metric_rows_json(std::span<const MetricRow> rows);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_METRICS_HPP
