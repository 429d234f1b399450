#include "shapegrasp/metrics.hpp"

#include "shapegrasp/occupancy.hpp"
#include "shapegrasp/parallel.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace shapegrasp {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

OccupancyFn mesh_occupancy(std::shared_ptr<const TriangleBvh> bvh) {
  if (!bvh || !bvh->watertight())
    throw Error(ErrorKind::Precondition,
                "mesh occupancy needs a watertight mesh");
  return [bvh](std::span<const Vec3> pts) { return occupancy(*bvh, pts); };
}

OccupancyFn field_occupancy(std::shared_ptr<const ImplicitField> field,
                            double threshold) {
  return [field, threshold](std::span<const Vec3> pts) {
    const auto values = field->query(pts);
    std::vector<std::uint8_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      out[i] = values[i] >= threshold ? 1 : 0;
    return out;
  };
}

std::vector<Vec3> unit_cube_samples(std::size_t n, std::uint64_t seed) {
  std::vector<Vec3> pts(n);
  parallel_for(n, [&](std::size_t i) {
    pts[i] = Vec3(counter_uniform(seed, 3 * i), counter_uniform(seed, 3 * i + 1),
                  counter_uniform(seed, 3 * i + 2)) -
             Vec3::Constant(0.5);
  });
  return pts;
}

VolumetricReport volumetric_from_labels(std::span<const std::uint8_t> gt,
                                        std::span<const std::uint8_t> pred) {
  if (gt.size() != pred.size())
    throw Error(ErrorKind::InvalidArgument, "label counts differ");
  std::size_t a = 0, b = 0, both = 0, either = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool x = gt[i] != 0, y = pred[i] != 0;
    a += x;
    b += y;
    both += x && y;
    either += x || y;
  }
  if (a == 0)
    throw Error(ErrorKind::UndefinedMetric,
                "ground truth is empty over the sample; recall is undefined");
  VolumetricReport r;
  r.samples = gt.size();
  r.precision = b ? static_cast<double>(both) / b : 0.0;
  r.recall = static_cast<double>(both) / a;
  r.iou = static_cast<double>(both) / either;
  r.f1 = (r.precision + r.recall) > 0
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

VolumetricReport volumetric_metrics(const OccupancyFn& ground_truth,
                                    const OccupancyFn& prediction,
                                    std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  const auto pts = unit_cube_samples(n, seed);
  auto report = volumetric_from_labels(ground_truth(pts), prediction(pts));
  report.seed = seed;
  return report;
}

using BgPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using Tree = bgi::rtree<BgPoint, bgi::rstar<16>>;

struct NearestNeighbors::Impl {
  Tree tree;
};

NearestNeighbors::NearestNeighbors(std::span<const Vec3> points)
    : impl_(std::make_unique<Impl>()) {
  if (points.empty())
    throw Error(ErrorKind::EmptyGeometry, "nearest-neighbor set is empty");
  std::vector<BgPoint> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.emplace_back(p.x(), p.y(), p.z());
  impl_->tree = Tree(pts.begin(), pts.end());  // packed build
}

NearestNeighbors::~NearestNeighbors() = default;
NearestNeighbors::NearestNeighbors(NearestNeighbors&&) noexcept = default;
NearestNeighbors& NearestNeighbors::operator=(NearestNeighbors&&) noexcept =
    default;

double NearestNeighbors::distance(const Vec3& p) const {
  const BgPoint q(p.x(), p.y(), p.z());
  BgPoint hit(0, 0, 0);
  for (auto it = impl_->tree.qbegin(bgi::nearest(q, 1));
       it != impl_->tree.qend(); ++it)
    hit = *it;
  const Vec3 h(bg::get<0>(hit), bg::get<1>(hit), bg::get<2>(hit));
  return (h - p).norm();
}

std::vector<double> NearestNeighbors::distances(
    std::span<const Vec3> queries) const {
  std::vector<double> out(queries.size());
  parallel_for(queries.size(),
               [&](std::size_t i) { out[i] = distance(queries[i]); });
  return out;
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double share_within(const std::vector<double>& d, double tau) {
  std::size_t n = 0;
  for (double x : d) n += x <= tau;
  return static_cast<double>(n) / static_cast<double>(d.size());
}

}  // namespace

double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty())
    throw Error(ErrorKind::EmptyGeometry, "chamfer distance of an empty set");
  const NearestNeighbors na(a), nb(b);
  return 0.5 * (mean(nb.distances(a)) + mean(na.distances(b)));
}

SurfaceReport surface_fscore(std::span<const Vec3> a, std::span<const Vec3> b,
                             double tau) {
  if (!(tau > 0))
    throw Error(ErrorKind::InvalidArgument, "threshold must be positive");
  if (a.empty() || b.empty())
    throw Error(ErrorKind::EmptyGeometry, "f-score of an empty set");
  const NearestNeighbors na(a), nb(b);
  const auto a_to_b = nb.distances(a);
  const auto b_to_a = na.distances(b);
  SurfaceReport r;
  r.tau = tau;
  r.chamfer_l1 = 0.5 * (mean(a_to_b) + mean(b_to_a));
  r.precision = share_within(b_to_a, tau);
  r.recall = share_within(a_to_b, tau);
  r.f1 = (r.precision + r.recall) > 0
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

std::string format_metric_table(std::span<const MetricRow> rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %9s  %8s  %9s\n",
                static_cast<int>(width), "Model", "IoU", "F1", "Precision",
                "Recall", "CD");
  out << buf;
  auto cell = [](bool ok, double v) {
    char s[32];
    if (ok) std::snprintf(s, sizeof s, "%.4f", v);
    else std::snprintf(s, sizeof s, "-");
    return std::string(s);
  };
  for (const auto& r : rows) {
    const bool vol = r.volumetric.has_value();
    const bool surf = r.surface.has_value();
    std::snprintf(
        buf, sizeof buf, "%-*s  %8s  %8s  %9s  %8s  %9s\n",
        static_cast<int>(width), r.model.c_str(),
        cell(vol, vol ? r.volumetric->iou : 0).c_str(),
        cell(vol, vol ? r.volumetric->f1 : 0).c_str(),
        cell(vol, vol ? r.volumetric->precision : 0).c_str(),
        cell(vol, vol ? r.volumetric->recall : 0).c_str(),
        cell(surf, surf ? r.surface->chamfer_l1 : 0).c_str());
    out << buf;
  }
  return out.str();
}

std::string metric_rows_json(std::span<const MetricRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["model"] = r.model;
    if (r.volumetric) {
      const auto& v = *r.volumetric;
      j["volumetric"] = {{"iou", v.iou},         {"f1", v.f1},
                         {"precision", v.precision}, {"recall", v.recall},
                         {"samples", v.samples}, {"seed", v.seed}};
    }
    if (r.surface) {
      const auto& s = *r.surface;
      j["surface"] = {{"chamfer_l1", s.chamfer_l1}, {"f1", s.f1},
                      {"precision", s.precision},   {"recall", s.recall},
                      {"tau", s.tau}};
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace shapegrasp
