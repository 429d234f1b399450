#ifndef SHAPEGRASP_IO_HPP
#define SHAPEGRASP_IO_HPP

#include "shapegrasp/implicit.hpp"
#include "shapegrasp/occupancy.hpp"
#include "shapegrasp/sensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace shapegrasp {

using Json = nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Lowercase hex SHA-256.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const fs::path& path);

Json read_json(const fs::path& path);
/// Pretty-printed with sorted keys and a trailing newline.
void write_json(const fs::path& path, const Json& doc);

/// Sidecar of a binary artifact: `<path>.json`.
fs::path sidecar_path(const fs::path& path);

/// Little-endian float32 x, y, z records. The sidecar records the count and
/// whatever `meta` holds (frame, seed, provenance).
void save_points(const fs::path& path, const std::vector<Vec3>& points,
                 Json meta = Json::object());
std::vector<Vec3> load_points(const fs::path& path);

/// float32 x, y, z + uint8 label records; the sidecar records strategy,
/// parameter, seed and the source mesh hash.
void save_queries(const fs::path& path, const QueryPointSet& qps,
                  const std::string& source_hash);
QueryPointSet load_queries(const fs::path& path);

/// Float32 PFM, scale -1 (little-endian), rows stored bottom to top.
struct PfmImage {
  int width = 0, height = 0, channels = 1;
  std::vector<float> data;  // top row first, channels interleaved
};

void write_pfm(const fs::path& path, const PfmImage& image);
PfmImage read_pfm(const fs::path& path);

PfmImage to_pfm(const DepthImage& depth);
PfmImage to_pfm(const NormalImage& normals);
DepthImage depth_from_pfm(const PfmImage& pfm);
NormalImage normals_from_pfm(const PfmImage& pfm);

Json camera_to_json(const PinholeCamera& camera);
PinholeCamera camera_from_json(const Json& j);
Json kinect_to_json(const KinectNoiseParams& p);

/// Grid as `<path>` (float32 blob, x slowest, z fastest) plus the JSON
/// header `<path>.json`. `origin` is the lower corner of the first cell;
/// samples sit at cell centers.
void save_grid(const fs::path& path, const ScalarGrid& grid);
ScalarGrid load_grid(const fs::path& path);
void save_tsdf(const fs::path& path, const TsdfVolume& volume);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_IO_HPP
