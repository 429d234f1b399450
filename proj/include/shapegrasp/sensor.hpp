#ifndef SHAPEGRASP_SENSOR_HPP
#define SHAPEGRASP_SENSOR_HPP

#include "shapegrasp/bvh.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace shapegrasp {

/// Pinhole camera, OpenCV convention: +z optical axis, +x right, +y down.
/// Integer pixel coordinates address pixel centers. `pose` maps camera ->
/// world.
struct PinholeCamera {
  int width = 640;
  int height = 480;
  double fx = 575.0, fy = 575.0;
  double cx = 319.5, cy = 239.5;
  Pose pose = Pose::Identity();

  /// Camera-frame direction through pixel (u, v), scaled so z == 1.
  Vec3 ray(double u, double v) const {
    return Vec3((u - cx) / fx, (v - cy) / fy, 1.0);
  }
  /// Pixel coordinates of a camera-frame point in front of the camera.
  std::optional<Eigen::Vector2d> project(const Vec3& p_camera) const;
  Vec3 position() const { return pose.translation(); }

  /// Throws ErrorKind::InvalidArgument on bad intrinsics or a non-orthonormal
  /// rotation.
  void validate() const;
};

template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill)
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool inside(int u, int v) const {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }
  T& operator()(int u, int v) { return data_[index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[index(u, v)]; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * width_ + u;
  }
  int width_ = 0, height_ = 0;
  std::vector<T> data_;
};

/// Depth along the optical axis in meters; missing pixels are NaN.
using DepthImage = Image<double>;
/// Unit normals in the camera frame, facing the camera; NaN where missing.
using NormalImage = Image<Vec3>;

inline constexpr double kMissingDepth = std::numeric_limits<double>::quiet_NaN();

inline bool has_depth(double d) { return std::isfinite(d); }

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

/// Cameras on the upper hemisphere (z >= 0) looking at the origin. Height
/// z/d is uniform in [0,1] (uniform area measure), azimuth uniform,
/// distance uniform in [d_min, d_max].
std::vector<PinholeCamera> sample_views(std::size_t n, double d_min,
                                        double d_max, std::uint64_t seed,
                                        const PinholeCamera& intrinsics = {});

struct RenderResult {
  DepthImage depth;
  NormalImage normals;
};

RenderResult render_depth(const TriangleBvh& bvh, const PinholeCamera& camera);
/// Same result computed against every triangle per pixel.
RenderResult render_depth_brute_force(const TriangleMesh& mesh,
                                      const PinholeCamera& camera);

/// Structured-light sensor artifacts. A zero value disables the matching
/// stage.
struct KinectNoiseParams {
  // Axial std in meters: base + quadratic * (depth - reference_depth)^2.
  double axial_base = 0.0012;
  double axial_quadratic = 0.0019;
  double axial_reference_depth = 0.4;
  double lateral_std_px = 0.5;
  // Disparity quantization step in pixels; uses baseline and fx.
  double disparity_step_px = 0.125;
  double grazing_threshold_deg = 80.0;
  double discontinuity_threshold = 0.02;  // meters
  int discontinuity_radius_px = 1;
  double baseline = 0.075;  // projector offset along camera +x, meters

  static KinectNoiseParams zero();
  void validate() const;
};

DepthImage simulate_kinect(const DepthImage& depth, const NormalImage& normals,
                           const PinholeCamera& camera,
                           const KinectNoiseParams& params, std::uint64_t seed);

/// Pixels with a 4-neighbor that is missing or differs by more than
/// `threshold`.
Image<std::uint8_t> detect_depth_edges(const DepthImage& depth,
                                       double threshold);

enum class CloudFrame { Camera, World };

std::vector<Vec3> depth_to_pointcloud(const DepthImage& depth,
                                      const PinholeCamera& camera,
                                      CloudFrame frame);

struct FlaggedCloud {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> edge;  // same length as points
};

/// Back-projection that also carries per-point edge flags.
FlaggedCloud depth_to_flagged_cloud(const DepthImage& depth,
                                    const PinholeCamera& camera,
                                    CloudFrame frame, double edge_threshold);

struct AugmentParams {
  double global_std = 0.0;
  double edge_std = 0.0;               // extra noise along the viewing ray
  double edge_removal_fraction = 0.0;  // in [0, 1]
  Vec3 viewpoint = Vec3::Zero();       // sensor origin in the cloud's frame
};

FlaggedCloud augment_input(const FlaggedCloud& cloud,
                           const AugmentParams& params, std::uint64_t seed);

/// Bounding-box center to the origin, longest side to 1.
std::pair<std::vector<Vec3>, RigidScaleTransform> normalize_input(
    std::span<const Vec3> points);

/// Standard normal from a counter, for order-independent noise.
double counter_gaussian(std::uint64_t seed, std::uint64_t counter);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_SENSOR_HPP
