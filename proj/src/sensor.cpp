#include "shapegrasp/sensor.hpp"

#include "shapegrasp/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace shapegrasp {

std::optional<Eigen::Vector2d> PinholeCamera::project(const Vec3& p) const {
  if (!(p.z() > 0)) return std::nullopt;
  return Eigen::Vector2d(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

void PinholeCamera::validate() const {
  if (width <= 0 || height <= 0)
    throw Error(ErrorKind::InvalidArgument, "camera size must be positive");
  if (!(fx > 0 && fy > 0))
    throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
    throw Error(ErrorKind::InvalidArgument,
                "principal point must lie inside the image");
  const Mat3 r = pose.linear();
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9)
    throw Error(ErrorKind::InvalidArgument,
                "camera rotation is not orthonormal");
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 u = up - up.dot(z) * z;
  if (u.norm() < 1e-9) {
    // Looking along `up`; any perpendicular works.
    const Vec3 alt = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    u = alt - alt.dot(z) * z;
  }
  const Vec3 y = -u.normalized();
  const Vec3 x = y.cross(z);
  Pose pose = Pose::Identity();
  pose.linear().col(0) = x;
  pose.linear().col(1) = y;
  pose.linear().col(2) = z;
  pose.translation() = eye;
  return pose;
}

std::vector<PinholeCamera> sample_views(std::size_t n, double d_min,
                                        double d_max, std::uint64_t seed,
                                        const PinholeCamera& intrinsics) {
  if (!(d_min > 0 && d_min <= d_max))
    throw Error(ErrorKind::InvalidArgument,
                "view distance range must satisfy 0 < d_min <= d_max");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<PinholeCamera> views;
  views.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = uni(rng);
    const double azimuth = 2 * M_PI * uni(rng);
    const double d = d_min + (d_max - d_min) * uni(rng);
    const double ring = std::sqrt(std::max(0.0, 1 - h * h));
    const Vec3 eye = d * Vec3(ring * std::cos(azimuth),
                              ring * std::sin(azimuth), h);
    PinholeCamera cam = intrinsics;
    cam.pose = look_at(eye, Vec3::Zero(), Vec3::UnitZ());
    views.push_back(cam);
  }
  return views;
}

namespace {

template <typename HitFn>
RenderResult render_with(const PinholeCamera& camera, HitFn&& hit_fn,
                         const TriangleMesh& mesh) {
  camera.validate();
  RenderResult out{DepthImage(camera.width, camera.height, kMissingDepth),
                   NormalImage(camera.width, camera.height,
                               Vec3::Constant(kMissingDepth))};
  const Mat3 r = camera.pose.linear();
  const Vec3 origin = camera.pose.translation();
  parallel_for(static_cast<std::size_t>(camera.height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < camera.width; ++u) {
      const Vec3 ray = camera.ray(u, v);
      const auto hit = hit_fn(origin, Vec3(r * ray));
      if (!hit) continue;
      out.depth(u, v) = hit->t;
      Vec3 n = r.transpose() * mesh.normal(hit->tri);
      if (n.dot(ray) > 0) n = -n;
      out.normals(u, v) = n;
    }
  });
  return out;
}

}  // namespace

RenderResult render_depth(const TriangleBvh& bvh, const PinholeCamera& camera) {
  return render_with(
      camera,
      [&](const Vec3& o, const Vec3& d) { return bvh.closest_hit(o, d); },
      bvh.mesh());
}

RenderResult render_depth_brute_force(const TriangleMesh& mesh,
                                      const PinholeCamera& camera) {
  return render_with(
      camera,
      [&](const Vec3& o, const Vec3& d) {
        return brute_force_closest_hit(mesh, o, d);
      },
      mesh);
}

KinectNoiseParams KinectNoiseParams::zero() {
  KinectNoiseParams p;
  p.axial_base = p.axial_quadratic = p.axial_reference_depth = 0;
  p.lateral_std_px = 0;
  p.disparity_step_px = 0;
  p.grazing_threshold_deg = 0;
  p.discontinuity_threshold = 0;
  p.discontinuity_radius_px = 0;
  p.baseline = 0;
  return p;
}

void KinectNoiseParams::validate() const {
  const double vals[] = {axial_base, axial_quadratic, axial_reference_depth,
                         lateral_std_px, disparity_step_px,
                         grazing_threshold_deg, discontinuity_threshold,
                         baseline};
  for (double v : vals)
    if (!(v >= 0))
      throw Error(ErrorKind::InvalidArgument,
                  "kinect noise parameters must be non-negative");
  if (discontinuity_radius_px < 0)
    throw Error(ErrorKind::InvalidArgument,
                "discontinuity radius must be non-negative");
  if (grazing_threshold_deg >= 90)
    throw Error(ErrorKind::InvalidArgument,
                "grazing threshold must lie in (0, 90) degrees (0 disables)");
}

double counter_gaussian(std::uint64_t seed, std::uint64_t counter) {
  const double u1 = std::max(counter_uniform(seed, 2 * counter), 1e-300);
  const double u2 = counter_uniform(seed, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * M_PI * u2);
}

Image<std::uint8_t> detect_depth_edges(const DepthImage& depth,
                                       double threshold) {
  Image<std::uint8_t> edge(depth.width(), depth.height(), 0);
  const int du[4] = {1, -1, 0, 0}, dv[4] = {0, 0, 1, -1};
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth(u, v);
      if (!has_depth(d)) continue;
      for (int k = 0; k < 4; ++k) {
        const int nu = u + du[k], nv = v + dv[k];
        if (!depth.inside(nu, nv)) continue;
        const double e = depth(nu, nv);
        if (!has_depth(e) || std::abs(e - d) > threshold) {
          edge(u, v) = 1;
          break;
        }
      }
    }
  return edge;
}

namespace {

// Projector-side occlusion along each image row. The projector sits at
// (baseline, 0, 0) in the camera frame, so epipolar lines are image rows.
void apply_shadow(DepthImage& depth, const PinholeCamera& cam,
                  const KinectNoiseParams& params) {
  const int w = depth.width();
  std::vector<double> zbuf(static_cast<std::size_t>(w));
  std::vector<double> proj_u(static_cast<std::size_t>(w));
  const double b = params.baseline;
  const double jump = params.discontinuity_threshold > 0
                          ? params.discontinuity_threshold
                          : 0.02;
  for (int v = 0; v < depth.height(); ++v) {
    std::fill(zbuf.begin(), zbuf.end(), std::numeric_limits<double>::infinity());
    for (int u = 0; u < w; ++u) {
      const double z = depth(u, v);
      if (!has_depth(z)) continue;
      const double x = (u - cam.cx) / cam.fx * z;
      proj_u[u] = cam.fx * (x - b) / z + cam.cx;
    }
    auto splat = [&](double pu, double z) {
      const long c = std::lround(pu);
      if (c >= 0 && c < w) zbuf[c] = std::min(zbuf[c], z);
    };
    for (int u = 0; u < w; ++u) {
      const double z0 = depth(u, v);
      if (!has_depth(z0)) continue;
      splat(proj_u[u], z0);
      if (u + 1 >= w) continue;
      const double z1 = depth(u + 1, v);
      if (!has_depth(z1) || std::abs(z1 - z0) > jump) continue;
      // Continuous surface between neighbors: fill the projector cells it
      // covers.
      const double a = proj_u[u], c = proj_u[u + 1];
      const long lo = static_cast<long>(std::ceil(std::min(a, c)));
      const long hi = static_cast<long>(std::floor(std::max(a, c)));
      for (long k = std::max(0L, lo); k <= std::min<long>(w - 1, hi); ++k) {
        const double t = (c == a) ? 0.0 : (static_cast<double>(k) - a) / (c - a);
        zbuf[k] = std::min(zbuf[k], z0 + t * (z1 - z0));
      }
    }
    for (int u = 0; u < w; ++u) {
      const double z = depth(u, v);
      if (!has_depth(z)) continue;
      const long c = std::lround(proj_u[u]);
      if (c < 0 || c >= w) {
        depth(u, v) = kMissingDepth;  // outside the projector frustum
        continue;
      }
      const double tol = std::max(1e-3, 0.01 * z);
      if (z > zbuf[c] + tol) depth(u, v) = kMissingDepth;
    }
  }
}

}  // namespace

DepthImage simulate_kinect(const DepthImage& depth, const NormalImage& normals,
                           const PinholeCamera& camera,
                           const KinectNoiseParams& params,
                           std::uint64_t seed) {
  params.validate();
  if (depth.width() != normals.width() || depth.height() != normals.height())
    throw Error(ErrorKind::InvalidArgument,
                "depth and normal images differ in size");
  if (depth.width() != camera.width || depth.height() != camera.height)
    throw Error(ErrorKind::InvalidArgument,
                "depth image does not match camera size");
  DepthImage out = depth;
  const int w = depth.width(), h = depth.height();

  if (params.grazing_threshold_deg > 0) {
    const double cos_limit = std::cos(params.grazing_threshold_deg * M_PI / 180.0);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        if (!has_depth(out(u, v))) continue;
        const Vec3& n = normals(u, v);
        if (!all_finite(n)) continue;
        const double c = -n.dot(camera.ray(u, v).normalized());
        if (c < cos_limit) out(u, v) = kMissingDepth;
      }
  }

  if (params.discontinuity_radius_px > 0 && params.discontinuity_threshold > 0) {
    const auto edge = detect_depth_edges(out, params.discontinuity_threshold);
    const int r = params.discontinuity_radius_px;
    DepthImage cut = out;
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        if (!edge(u, v)) continue;
        for (int dv = -r; dv <= r; ++dv)
          for (int du = -r; du <= r; ++du)
            if (du * du + dv * dv <= r * r && out.inside(u + du, v + dv))
              cut(u + du, v + dv) = kMissingDepth;
      }
    out = std::move(cut);
  }

  if (params.baseline > 0) apply_shadow(out, camera, params);

  if (params.lateral_std_px > 0) {
    DepthImage jittered(w, h, kMissingDepth);
    const std::uint64_t lateral_seed = derive_seed(seed, 1);
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
      const int v = static_cast<int>(row);
      for (int u = 0; u < w; ++u) {
        const std::uint64_t k = static_cast<std::uint64_t>(v) * w + u;
        const long su = u + std::lround(params.lateral_std_px *
                                        counter_gaussian(lateral_seed, 2 * k));
        const long sv = v + std::lround(params.lateral_std_px *
                                        counter_gaussian(lateral_seed, 2 * k + 1));
        jittered(u, v) = out(static_cast<int>(std::clamp<long>(su, 0, w - 1)),
                             static_cast<int>(std::clamp<long>(sv, 0, h - 1)));
      }
    });
    out = std::move(jittered);
  }

  const std::uint64_t axial_seed = derive_seed(seed, 2);
  const bool axial = params.axial_base > 0 || params.axial_quadratic > 0;
  const bool quantize = params.disparity_step_px > 0 && params.baseline > 0;
  const double fb = camera.fx * params.baseline;
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      double z = out(u, v);
      if (!has_depth(z)) continue;
      if (axial) {
        const double dz = z - params.axial_reference_depth;
        const double sigma = params.axial_base + params.axial_quadratic * dz * dz;
        z += sigma * counter_gaussian(axial_seed,
                                      static_cast<std::uint64_t>(v) * w + u);
      }
      if (quantize) {
        const double disparity =
            std::round(fb / z / params.disparity_step_px) * params.disparity_step_px;
        z = disparity > 0 ? fb / disparity : kMissingDepth;
      }
      out(u, v) = (z > 0) ? z : kMissingDepth;
    }
  });
  return out;
}

std::vector<Vec3> depth_to_pointcloud(const DepthImage& depth,
                                      const PinholeCamera& camera,
                                      CloudFrame frame) {
  return depth_to_flagged_cloud(depth, camera, frame, 0.0).points;
}

FlaggedCloud depth_to_flagged_cloud(const DepthImage& depth,
                                    const PinholeCamera& camera,
                                    CloudFrame frame, double edge_threshold) {
  FlaggedCloud cloud;
  Image<std::uint8_t> edge;
  if (edge_threshold > 0) edge = detect_depth_edges(depth, edge_threshold);
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth(u, v);
      if (!has_depth(d)) continue;
      Vec3 p = camera.ray(u, v) * d;
      if (frame == CloudFrame::World) p = camera.pose * p;
      cloud.points.push_back(p);
      cloud.edge.push_back(edge_threshold > 0 ? edge(u, v) : 0);
    }
  return cloud;
}

FlaggedCloud augment_input(const FlaggedCloud& cloud,
                           const AugmentParams& params, std::uint64_t seed) {
  if (cloud.points.empty())
    throw Error(ErrorKind::EmptyGeometry, "cannot augment an empty cloud");
  if (cloud.edge.size() != cloud.points.size())
    throw Error(ErrorKind::InvalidArgument, "edge flags do not match points");
  if (!(params.edge_removal_fraction >= 0 && params.edge_removal_fraction <= 1))
    throw Error(ErrorKind::InvalidArgument,
                "edge removal fraction must lie in [0,1]");
  const std::uint64_t noise_seed = derive_seed(seed, 1);
  const std::uint64_t drop_seed = derive_seed(seed, 2);
  FlaggedCloud out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const bool is_edge = cloud.edge[i] != 0;
    if (is_edge && params.edge_removal_fraction > 0 &&
        counter_uniform(drop_seed, i) < params.edge_removal_fraction)
      continue;
    Vec3 p = cloud.points[i];
    if (params.global_std > 0)
      p += params.global_std * Vec3(counter_gaussian(noise_seed, 4 * i),
                                    counter_gaussian(noise_seed, 4 * i + 1),
                                    counter_gaussian(noise_seed, 4 * i + 2));
    if (is_edge && params.edge_std > 0) {
      const Vec3 ray = cloud.points[i] - params.viewpoint;
      if (ray.norm() > 0)
        p += params.edge_std * counter_gaussian(noise_seed, 4 * i + 3) *
             ray.normalized();
    }
    out.points.push_back(p);
    out.edge.push_back(cloud.edge[i]);
  }
  return out;
}

std::pair<std::vector<Vec3>, RigidScaleTransform> normalize_input(
    std::span<const Vec3> points) {
  if (points.size() < 2)
    throw Error(ErrorKind::DegenerateGeometry,
                "normalization needs at least two distinct points");
  const auto t = unit_cube_transform(points);
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t.apply(p));
  return {std::move(out), t};
}

}  // namespace shapegrasp
