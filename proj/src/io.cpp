#include "shapegrasp/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace shapegrasp {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, {text.begin(), text.end()});
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return sha256_hex(bytes.data(), bytes.size());
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) {
  // nlohmann::json objects keep keys sorted, so the dump is canonical.
  write_text(path, doc.dump(2) + "\n");
}

fs::path sidecar_path(const fs::path& path) {
  return fs::path(path.string() + ".json");
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& buf, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& buf, std::size_t& at) {
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

void put_point(std::vector<std::uint8_t>& buf, const Vec3& p) {
  for (int k = 0; k < 3; ++k) put(buf, static_cast<float>(p[k]));
}

Vec3 get_point(const std::vector<std::uint8_t>& buf, std::size_t& at) {
  Vec3 p;
  for (int k = 0; k < 3; ++k) p[k] = get<float>(buf, at);
  return p;
}

std::size_t expect_count(const fs::path& path, std::size_t bytes,
                         std::size_t record, const Json& side) {
  if (bytes % record != 0)
    throw Error(ErrorKind::MalformedFile,
                path.string() + ": size is not a whole number of records");
  const std::size_t n = bytes / record;
  if (side.contains("count") && side["count"].get<std::size_t>() != n)
    throw Error(ErrorKind::MalformedFile,
                path.string() + ": record count disagrees with sidecar");
  return n;
}

}  // namespace

void save_points(const fs::path& path, const std::vector<Vec3>& points,
                 Json meta) {
  std::vector<std::uint8_t> buf;
  buf.reserve(points.size() * 12);
  for (const auto& p : points) put_point(buf, p);
  write_bytes(path, buf);
  meta["count"] = points.size();
  meta["format"] = "float32le xyz";
  if (!meta.contains("frame")) meta["frame"] = "object";
  write_json(sidecar_path(path), meta);
}

std::vector<Vec3> load_points(const fs::path& path) {
  const auto buf = read_bytes(path);
  Json side = Json::object();
  if (fs::exists(sidecar_path(path))) side = read_json(sidecar_path(path));
  const std::size_t n = expect_count(path, buf.size(), 12, side);
  std::vector<Vec3> pts(n);
  std::size_t at = 0;
  for (auto& p : pts) p = get_point(buf, at);
  return pts;
}

void save_queries(const fs::path& path, const QueryPointSet& qps,
                  const std::string& source_hash) {
  if (!qps.labeled())
    throw Error(ErrorKind::Precondition, "query set is not labeled");
  std::vector<std::uint8_t> buf;
  buf.reserve(qps.points.size() * 13);
  for (std::size_t i = 0; i < qps.points.size(); ++i) {
    put_point(buf, qps.points[i]);
    put(buf, qps.labels[i]);
  }
  write_bytes(path, buf);
  Json side;
  side["count"] = qps.points.size();
  side["format"] = "float32le xyz + uint8 label";
  side["strategy"] = to_string(qps.strategy);
  side["parameter"] = qps.parameter;
  side["seed"] = qps.seed;
  side["source_mesh_sha256"] = source_hash;
  write_json(sidecar_path(path), side);
}

QueryPointSet load_queries(const fs::path& path) {
  const auto buf = read_bytes(path);
  const Json side = read_json(sidecar_path(path));
  const std::size_t n = expect_count(path, buf.size(), 13, side);
  QueryPointSet qps;
  qps.strategy = query_strategy_from_string(side.at("strategy").get<std::string>());
  qps.parameter = side.at("parameter").get<double>();
  qps.seed = side.at("seed").get<std::uint64_t>();
  qps.points.resize(n);
  qps.labels.resize(n);
  std::size_t at = 0;
  for (std::size_t i = 0; i < n; ++i) {
    qps.points[i] = get_point(buf, at);
    qps.labels[i] = get<std::uint8_t>(buf, at);
  }
  return qps;
}

void write_pfm(const fs::path& path, const PfmImage& image) {
  if (image.channels != 1 && image.channels != 3)
    throw Error(ErrorKind::InvalidArgument, "PFM needs 1 or 3 channels");
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  if (image.data.size() != row * image.height)
    throw Error(ErrorKind::InvalidArgument, "PFM data size mismatch");
  std::ostringstream head;
  head << (image.channels == 3 ? "PF" : "Pf") << "\n"
       << image.width << " " << image.height << "\n-1.0\n";
  const std::string h = head.str();
  std::vector<std::uint8_t> buf(h.begin(), h.end());
  buf.reserve(buf.size() + image.data.size() * 4);
  for (int v = image.height - 1; v >= 0; --v)
    for (std::size_t i = 0; i < row; ++i) put(buf, image.data[v * row + i]);
  write_bytes(path, buf);
}

PfmImage read_pfm(const fs::path& path) {
  const auto buf = read_bytes(path);
  std::size_t at = 0;
  auto token = [&]() {
    while (at < buf.size() && std::isspace(buf[at])) ++at;
    std::string t;
    while (at < buf.size() && !std::isspace(buf[at])) t.push_back(static_cast<char>(buf[at++]));
    return t;
  };
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::MalformedFile, path.string() + ": " + why);
  };
  PfmImage img;
  const std::string magic = token();
  if (magic == "PF") img.channels = 3;
  else if (magic == "Pf") img.channels = 1;
  else throw bad("not a PFM file");
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
  } catch (const std::exception&) {
    throw bad("bad PFM dimensions");
  }
  const std::string scale_text = token();
  double scale;
  try {
    scale = std::stod(scale_text);
  } catch (const std::exception&) {
    throw bad("bad PFM scale");
  }
  if (scale >= 0) throw bad("big-endian PFM is not supported");
  ++at;  // single whitespace byte after the scale
  if (img.width <= 0 || img.height <= 0) throw bad("bad PFM dimensions");
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  if (buf.size() - at != row * img.height * 4) throw bad("truncated PFM data");
  img.data.resize(row * img.height);
  for (int v = img.height - 1; v >= 0; --v)
    for (std::size_t i = 0; i < row; ++i) img.data[v * row + i] = get<float>(buf, at);
  return img;
}

PfmImage to_pfm(const DepthImage& depth) {
  PfmImage p{depth.width(), depth.height(), 1, {}};
  p.data.reserve(depth.size());
  for (double d : depth.data()) p.data.push_back(static_cast<float>(d));
  return p;
}

PfmImage to_pfm(const NormalImage& normals) {
  PfmImage p{normals.width(), normals.height(), 3, {}};
  p.data.reserve(normals.size() * 3);
  for (const auto& n : normals.data())
    for (int k = 0; k < 3; ++k) p.data.push_back(static_cast<float>(n[k]));
  return p;
}

DepthImage depth_from_pfm(const PfmImage& pfm) {
  if (pfm.channels != 1)
    throw Error(ErrorKind::InvalidArgument, "depth PFM must have one channel");
  DepthImage d(pfm.width, pfm.height, kMissingDepth);
  for (std::size_t i = 0; i < pfm.data.size(); ++i) d.data()[i] = pfm.data[i];
  return d;
}

NormalImage normals_from_pfm(const PfmImage& pfm) {
  if (pfm.channels != 3)
    throw Error(ErrorKind::InvalidArgument, "normal PFM must have three channels");
  NormalImage n(pfm.width, pfm.height, Vec3::Zero());
  for (std::size_t i = 0; i < n.size(); ++i)
    n.data()[i] = Vec3(pfm.data[3 * i], pfm.data[3 * i + 1], pfm.data[3 * i + 2]);
  return n;
}

namespace {

Json matrix_rows(const Eigen::Matrix4d& m) {
  Json rows = Json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) rows.push_back(m(r, c));
  return rows;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorKind::MalformedFile, "expected 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

Json camera_to_json(const PinholeCamera& c) {
  return {{"width", c.width}, {"height", c.height}, {"fx", c.fx},
          {"fy", c.fy},       {"cx", c.cx},         {"cy", c.cy},
          {"pose", matrix_rows(c.pose.matrix())}};
}

PinholeCamera camera_from_json(const Json& j) {
  PinholeCamera c;
  try {
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    const Json& rows = j.at("pose");
    if (!rows.is_array() || rows.size() != 16)
      throw Error(ErrorKind::MalformedFile, "camera pose must be 16 numbers");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 4; ++col) m(r, col) = rows[4 * r + col].get<double>();
    c.pose.matrix() = m;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("bad camera: ") + e.what());
  }
  c.validate();
  return c;
}

Json kinect_to_json(const KinectNoiseParams& p) {
  return {{"axial_base", p.axial_base},
          {"axial_quadratic", p.axial_quadratic},
          {"axial_reference_depth", p.axial_reference_depth},
          {"lateral_std_px", p.lateral_std_px},
          {"disparity_step_px", p.disparity_step_px},
          {"grazing_threshold_deg", p.grazing_threshold_deg},
          {"discontinuity_threshold", p.discontinuity_threshold},
          {"discontinuity_radius_px", p.discontinuity_radius_px},
          {"baseline", p.baseline}};
}

namespace {

Json grid_header(const GridGeometry& g) {
  return {{"resolution", {g.resolution.x(), g.resolution.y(), g.resolution.z()}},
          {"origin", vec_json(g.origin)},
          {"voxel", vec_json(g.voxel)},
          {"axis_order", "xyz, x slowest, z fastest"},
          {"sample", "cell center"},
          {"dtype", "float32le"}};
}

void save_floats(const fs::path& path, const std::vector<float>& values) {
  std::vector<std::uint8_t> buf(values.size() * 4);
  std::memcpy(buf.data(), values.data(), buf.size());
  write_bytes(path, buf);
}

}  // namespace

void save_grid(const fs::path& path, const ScalarGrid& grid) {
  if (grid.values.size() != grid.geometry.count())
    throw Error(ErrorKind::InvalidArgument, "grid value count mismatch");
  std::vector<float> vals(grid.values.begin(), grid.values.end());
  save_floats(path, vals);
  write_json(sidecar_path(path), grid_header(grid.geometry));
}

ScalarGrid load_grid(const fs::path& path) {
  const Json head = read_json(sidecar_path(path));
  ScalarGrid grid;
  try {
    const Json& r = head.at("resolution");
    if (!r.is_array() || r.size() != 3)
      throw Error(ErrorKind::MalformedFile, "grid resolution must be 3 integers");
    grid.geometry.resolution =
        Eigen::Vector3i(r[0].get<int>(), r[1].get<int>(), r[2].get<int>());
    grid.geometry.origin = vec_from(head.at("origin"));
    grid.geometry.voxel = vec_from(head.at("voxel"));
    if (head.contains("axis_order") &&
        head["axis_order"].get<std::string>().rfind("xyz", 0) != 0)
      throw Error(ErrorKind::MalformedFile, "unsupported grid axis order");
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("bad grid header: ") + e.what());
  }
  if ((grid.geometry.resolution.array() < 1).any() ||
      (grid.geometry.voxel.array() <= 0).any())
    throw Error(ErrorKind::MalformedFile, "grid header has invalid geometry");
  const auto buf = read_bytes(path);
  if (buf.size() != grid.geometry.count() * 4)
    throw Error(ErrorKind::MalformedFile,
                path.string() + ": blob size disagrees with the header");
  grid.values.resize(grid.geometry.count());
  std::size_t at = 0;
  for (auto& v : grid.values) v = get<float>(buf, at);
  return grid;
}

void save_tsdf(const fs::path& path, const TsdfVolume& volume) {
  save_floats(path, volume.sdf);
  Json head = grid_header(volume.geometry);
  head["truncation"] = volume.truncation;
  write_json(sidecar_path(path), head);
  save_floats(fs::path(path.string() + ".weight"), volume.weight);
}

}  // namespace shapegrasp
