#include "shapegrasp/implicit.hpp"

#include "shapegrasp/occupancy.hpp"
#include "shapegrasp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace shapegrasp {

std::vector<double> ImplicitField::query(std::span<const Vec3> points) const {
  std::vector<double> out(points.size());
  query(points, out);
  return out;
}

double ImplicitField::operator()(const Vec3& p) const {
  double v = 0;
  query(std::span<const Vec3>(&p, 1), std::span<double>(&v, 1));
  return v;
}

GroundTruthField::GroundTruthField(std::shared_ptr<const TriangleBvh> bvh)
    : bvh_(std::move(bvh)) {
  if (!bvh_ || !bvh_->watertight())
    throw Error(ErrorKind::Precondition,
                "ground-truth field needs a watertight mesh");
}

void GroundTruthField::query(std::span<const Vec3> points,
                             std::span<double> out) const {
  parallel_for(points.size(), [&](std::size_t i) {
    out[i] = point_occupancy(*bvh_, points[i]) ? 1.0 : 0.0;
  });
}

std::shared_ptr<GroundTruthField> ground_truth_field(
    std::shared_ptr<const TriangleBvh> bvh) {
  return std::make_shared<GroundTruthField>(std::move(bvh));
}

FunctionField::FunctionField(std::function<double(const Vec3&)> fn)
    : fn_(std::move(fn)) {}

void FunctionField::query(std::span<const Vec3> points,
                          std::span<double> out) const {
  parallel_for(points.size(), [&](std::size_t i) {
    out[i] = std::clamp(fn_(points[i]), 0.0, 1.0);
  });
}

GridGeometry GridGeometry::covering(const Eigen::AlignedBox3d& bounds,
                                    const Eigen::Vector3i& resolution) {
  GridGeometry g;
  g.resolution = resolution;
  g.origin = bounds.min();
  g.voxel = bounds.sizes().cwiseQuotient(resolution.cast<double>());
  return g;
}

OccupancyGrid evaluate_grid(const ImplicitField& field,
                            const Eigen::Vector3i& resolution,
                            const Eigen::AlignedBox3d& bounds) {
  if (resolution.minCoeff() < 2)
    throw Error(ErrorKind::InvalidArgument,
                "grid resolution must be at least 2 per axis");
  if (bounds.isEmpty() || !(bounds.sizes().minCoeff() > 0))
    throw Error(ErrorKind::InvalidArgument, "grid bounds must have volume");
  OccupancyGrid grid;
  grid.geometry = GridGeometry::covering(bounds, resolution);
  grid.values.resize(grid.geometry.count());
  const auto& g = grid.geometry;
  // One x-slab at a time keeps the point buffer small.
  const std::size_t slab = static_cast<std::size_t>(resolution.y()) * resolution.z();
  std::vector<Vec3> points(slab);
  for (int i = 0; i < resolution.x(); ++i) {
    std::size_t n = 0;
    for (int j = 0; j < resolution.y(); ++j)
      for (int k = 0; k < resolution.z(); ++k) points[n++] = g.point(i, j, k);
    field.query(points, std::span<double>(grid.values.data() + i * slab, slab));
  }
  return grid;
}

// Marching cubes

namespace {

using CaseTable = std::vector<std::vector<std::array<int, 3>>>;

std::array<std::array<int, 2>, 12> build_edges() {
  std::array<std::array<int, 2>, 12> edges{};
  int e = 0;
  for (int axis = 0; axis < 3; ++axis)
    for (int c = 0; c < 8; ++c)
      if (!(c >> axis & 1)) edges[e++] = {c, c | (1 << axis)};
  return edges;
}

int edge_between(const std::array<std::array<int, 2>, 12>& edges, int a,
                 int b) {
  if (a > b) std::swap(a, b);
  for (int e = 0; e < 12; ++e)
    if (edges[e][0] == a && edges[e][1] == b) return e;
  return -1;
}

// Each face is walked counter-clockwise about its outward normal. A crossing
// from an outside corner to an inside corner is joined to the next crossing
// back out. Both cells sharing a face see the same pairing, so the segments
// match up and the surface closes.
CaseTable build_table() {
  const auto edges = build_edges();
  std::array<std::array<int, 4>, 6> faces{};
  int f = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int b = (axis + 1) % 3, c = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      auto corner = [&](int sb, int sc) {
        return (side << axis) | (sb << b) | (sc << c);
      };
      if (side == 1)
        faces[f++] = {corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)};
      else
        faces[f++] = {corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)};
    }
  }

  CaseTable table(256);
  for (int cs = 0; cs < 256; ++cs) {
    auto inside = [&](int corner) { return (cs >> corner & 1) != 0; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& face : faces) {
      std::vector<std::pair<int, bool>> crossings;  // (edge, entering)
      for (int i = 0; i < 4; ++i) {
        const int a = face[i], b = face[(i + 1) % 4];
        if (inside(a) != inside(b))
          crossings.emplace_back(edge_between(edges, a, b), inside(b));
      }
      const std::size_t m = crossings.size();
      for (std::size_t i = 0; i < m; ++i) {
        if (!crossings[i].second) continue;
        for (std::size_t s = 1; s < m; ++s) {
          const auto& cand = crossings[(i + s) % m];
          if (!cand.second) {
            next[crossings[i].first] = cand.first;
            break;
          }
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        used[e] = true;
        loop.push_back(e);
      }
      for (std::size_t i = 1; i + 1 < loop.size(); ++i)
        table[cs].push_back({loop[0], loop[i], loop[i + 1]});
    }
  }
  return table;
}

}  // namespace

const std::array<std::array<int, 2>, 12>& marching_cubes_edges() {
  static const auto edges = build_edges();
  return edges;
}

const std::vector<std::vector<std::array<int, 3>>>& marching_cubes_table() {
  static const CaseTable table = build_table();
  return table;
}

MarchingCubesResult marching_cubes(const ScalarGrid& grid, double iso) {
  const auto& g = grid.geometry;
  if (grid.values.size() != g.count())
    throw Error(ErrorKind::InvalidArgument, "grid value count mismatch");
  MarchingCubesResult result;
  if (g.resolution.minCoeff() < 2) return result;
  bool any_in = false, any_out = false;
  for (double v : grid.values) {
    if (v > iso) any_in = true; else any_out = true;
  }
  if (!any_in || !any_out) return result;

  const auto& table = marching_cubes_table();
  const auto& edges = marching_cubes_edges();
  const int nx = g.resolution.x(), ny = g.resolution.y(), nz = g.resolution.z();
  std::vector<Vec3> vertices;
  std::vector<Vec3i> triangles;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  auto vertex_on = [&](int i, int j, int k, int e) {
    const int ca = edges[e][0], cb = edges[e][1];
    const int axis = (ca ^ cb) == 1 ? 0 : ((ca ^ cb) == 2 ? 1 : 2);
    const int ai = i + (ca & 1), aj = j + (ca >> 1 & 1), ak = k + (ca >> 2 & 1);
    const std::uint64_t id = static_cast<std::uint64_t>(g.index(ai, aj, ak)) * 3 + axis;
    auto it = edge_vertex.find(id);
    if (it != edge_vertex.end()) return it->second;
    const int bi = i + (cb & 1), bj = j + (cb >> 1 & 1), bk = k + (cb >> 2 & 1);
    const double va = grid.at(ai, aj, ak), vb = grid.at(bi, bj, bk);
    const double t = (iso - va) / (vb - va);
    const Vec3 pa = g.point(ai, aj, ak), pb = g.point(bi, bj, bk);
    const int index = static_cast<int>(vertices.size());
    vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(id, index);
    return index;
  };

  for (int i = 0; i + 1 < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j)
      for (int k = 0; k + 1 < nz; ++k) {
        int cs = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1)) > iso)
            cs |= 1 << c;
        if (cs == 0 || cs == 255) continue;
        for (const auto& tri : table[cs])
          triangles.emplace_back(vertex_on(i, j, k, tri[0]),
                                 vertex_on(i, j, k, tri[1]),
                                 vertex_on(i, j, k, tri[2]));
      }
  result.mesh = TriangleMesh(std::move(vertices), std::move(triangles));
  result.empty = result.mesh.empty();
  return result;
}

// TSDF fusion

TsdfVolume::TsdfVolume(const GridGeometry& g, double trunc)
    : geometry(g), truncation(trunc),
      sdf(g.count(), static_cast<float>(trunc)), weight(g.count(), 0.0f),
      observed_free(g.count(), 0) {
  if (!(trunc > 0))
    throw Error(ErrorKind::InvalidArgument, "truncation must be positive");
}

void tsdf_integrate(TsdfVolume& volume, const DepthImage& depth,
                    const PinholeCamera& camera, bool background_is_free) {
  camera.validate();
  if (depth.width() != camera.width || depth.height() != camera.height)
    throw Error(ErrorKind::InvalidArgument,
                "depth image does not match camera size");
  const auto& g = volume.geometry;
  const Mat3 rt = camera.pose.linear().transpose();
  const Vec3 eye = camera.pose.translation();
  const Vec3 step_k = rt * Vec3(0, 0, g.voxel.z());
  const double trunc = volume.truncation;
  const int nx = g.resolution.x(), ny = g.resolution.y(), nz = g.resolution.z();
  parallel_for(static_cast<std::size_t>(nx), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    for (int j = 0; j < ny; ++j) {
      Vec3 pc = rt * (g.point(i, j, 0) - eye);
      for (int k = 0; k < nz; ++k, pc += step_k) {
        if (!(pc.z() > 0)) continue;
        const double u = camera.fx * pc.x() / pc.z() + camera.cx;
        const double v = camera.fy * pc.y() / pc.z() + camera.cy;
        const long iu = std::lround(u), iv = std::lround(v);
        if (iu < 0 || iv < 0 || iu >= camera.width || iv >= camera.height)
          continue;
        const double d = depth(static_cast<int>(iu), static_cast<int>(iv));
        double sdf;
        const std::size_t idx = g.index(i, j, k);
        if (!has_depth(d)) {
          if (!background_is_free) continue;
          sdf = trunc;
          volume.observed_free[idx] = 1;
        } else {
          sdf = d - pc.z();
          if (sdf < -trunc) continue;
          if (sdf > 0) volume.observed_free[idx] = 1;
          sdf = std::min(sdf, trunc);
        }
        const float w = volume.weight[idx];
        volume.sdf[idx] = static_cast<float>((volume.sdf[idx] * w + sdf) / (w + 1));
        volume.weight[idx] = w + 1;
      }
    }
  });
}

std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  std::vector<Vec3> dirs;
  dirs.reserve(n);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

TriangleMesh make_watertight(const TriangleMesh& mesh, int n_views,
                             int resolution) {
  WatertightParams params;
  params.views = n_views;
  params.resolution = resolution;
  return make_watertight(mesh, params);
}

TriangleMesh make_watertight(const TriangleMesh& mesh,
                             const WatertightParams& params) {
  if (mesh.empty())
    throw Error(ErrorKind::EmptyGeometry, "cannot close an empty mesh");
  if (params.views < 1 || params.resolution < 8)
    throw Error(ErrorKind::InvalidArgument,
                "need at least one view and resolution >= 8");
  const auto [unit, to_unit] = normalize_unit_cube(mesh);
  const TriangleBvh bvh(unit);

  // Three voxels of padding on every side.
  const int res = params.resolution;
  const double voxel = 1.0 / (res - 6);
  const double extent = res * voxel;
  GridGeometry g;
  g.resolution = Eigen::Vector3i::Constant(res);
  g.origin = Vec3::Constant(-extent / 2);
  g.voxel = Vec3::Constant(voxel);
  const double trunc = params.truncation_voxels * voxel;
  TsdfVolume volume(g, trunc);

  const double radius = extent * std::sqrt(3.0) / 2;
  const double dist = std::max(params.camera_distance, 1.5 * radius);
  PinholeCamera intrinsics;
  intrinsics.fx = intrinsics.fy =
      (dist + radius) / (params.pixel_footprint_voxels * voxel);
  const int half = static_cast<int>(std::ceil(
                       intrinsics.fx * radius /
                       std::sqrt(dist * dist - radius * radius))) + 1;
  intrinsics.width = intrinsics.height = 2 * half;
  intrinsics.cx = intrinsics.cy = half - 0.5;
  for (const Vec3& dir : fibonacci_sphere(static_cast<std::size_t>(params.views))) {
    PinholeCamera cam = intrinsics;
    cam.pose = look_at(dir * dist, Vec3::Zero(), Vec3::UnitZ());
    const auto rendered = render_depth(bvh, cam);
    tsdf_integrate(volume, rendered.depth, cam, true);
  }

  // Unsigned distance, signed by visibility: voxels seen as free space lie
  // outside, everything else inside, and the level set is offset outward so
  // that open sheets become thin closed shells.
  ScalarGrid field;
  field.geometry = g;
  field.values.resize(g.count());
  const double offset = params.offset_voxels * voxel;
  parallel_for(static_cast<std::size_t>(res), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    for (int j = 0; j < res; ++j)
      for (int k = 0; k < res; ++k) {
        const std::size_t idx = g.index(i, j, k);
        const bool border = i == 0 || j == 0 || k == 0 || i == res - 1 ||
                            j == res - 1 || k == res - 1;
        if (border) {
          field.values[idx] = -trunc;
          continue;
        }
        const auto hit = bvh.closest_point(g.point(i, j, k), trunc);
        const double d = hit ? hit->distance : trunc;
        field.values[idx] = volume.observed_free[idx] ? offset - d : offset + d;
      }
  });
  auto extracted = marching_cubes(field, 0.0);
  if (extracted.empty)
    throw Error(ErrorKind::DegenerateGeometry,
                "fusion produced no surface");
  return transformed(extracted.mesh, to_unit.inverse());
}

}  // namespace shapegrasp
