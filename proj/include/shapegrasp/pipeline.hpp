#ifndef SHAPEGRASP_PIPELINE_HPP
#define SHAPEGRASP_PIPELINE_HPP

#include "shapegrasp/grasp.hpp"
#include "shapegrasp/io.hpp"
#include "shapegrasp/occupancy.hpp"
#include "shapegrasp/sensor.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace shapegrasp {

struct PipelineConfig {
  // mesh preprocessing
  int watertight_views = 100;
  int watertight_resolution = 256;
  double decimate_fraction = 0.05;        // triangles kept
  double min_component_fraction = 0.01;   // of all triangles
  std::size_t surface_samples = 100'000;
  QuerySpec queries = QuerySpec::defaults();

  // views
  int views = 100;
  bool scale_augment = false;
  double scale_min = 0.8, scale_max = 1.2;  // along the upright (z) axis
  double object_size = 0.3;                 // meters, longest side
  double view_distance_min = 1.0, view_distance_max = 2.5;
  PinholeCamera camera;  // intrinsics only
  KinectNoiseParams kinect;

  // grasps
  int grasps = 0;
  double grasp_object_size = 0.08;  // meters, longest side

  double train_fraction = 0.9;

  void validate() const;
  Json to_json() const;
  /// Starts from the defaults; unknown keys throw ErrorKind::InvalidArgument.
  static PipelineConfig from_json(const Json& j);
};

struct ViewRecord {
  int index = 0;
  double scale_z = 1;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> files;  // kind -> path
};

struct ObjectRecord {
  std::string id;
  std::string category;
  std::string raw;  // as given
  // Artifact paths, relative to the output root.
  std::string watertight, decimated, normalized, samples, views_dir, grasps;
  std::vector<std::string> queries;
  std::vector<ViewRecord> views;
  std::map<std::string, std::string> hashes;  // relative path -> sha256
  RigidScaleTransform normalization;
  bool failed = false;
  std::string failed_stage;
  std::string error;

  Json to_json() const;
  static ObjectRecord from_json(const Json& j);
};

enum class Split { Train, Val };

struct Manifest {
  std::vector<ObjectRecord> objects;  // sorted by id
  std::map<std::string, Split> split;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  Json to_json() const;
  static Manifest from_json(const Json& j);
};

/// Raw meshes under `corpus`: `<category>/<name>.<ext>` or `<name>.<ext>`
/// (category "default"). Sorted by id.
std::vector<ObjectRecord> discover_corpus(const fs::path& corpus);

std::uint64_t object_seed(std::uint64_t global_seed, const std::string& id);

/// Watertight -> decimated -> normalized -> surface samples -> labeled
/// queries, each written under `root/<id>/` and hashed. A failing stage
/// marks the record instead of throwing.
ObjectRecord preprocess_object(ObjectRecord record, const PipelineConfig& config,
                               const fs::path& root, std::uint64_t seed);

/// Upright scale per view: U[scale_min, scale_max] when augmenting, else 1.
std::vector<double> view_scales(int n, bool scale_augment,
                                const PipelineConfig& config, std::uint64_t seed);

/// Renders `n` views of the normalized mesh: depth, normal and simulated
/// Kinect images plus a JSON sidecar per view.
std::vector<ViewRecord> generate_views(ObjectRecord& record, int n,
                                       bool scale_augment,
                                       const PipelineConfig& config,
                                       const fs::path& root, std::uint64_t seed);

/// Plans `config.grasps` grasps on the normalized mesh scaled to
/// `grasp_object_size`.
void plan_object_grasps(ObjectRecord& record, const PipelineConfig& config,
                        const fs::path& root, std::uint64_t seed);

/// Per-category shuffle; validation share round((1 - fraction) * count),
/// at least 1 when the category has 2 or more objects. Failed objects are
/// left out.
Manifest split_dataset(Manifest manifest, double fraction, std::uint64_t seed);

/// Everything above over a corpus, objects in parallel.
Manifest run_corpus(const fs::path& corpus, const fs::path& root,
                    const PipelineConfig& config, std::uint64_t seed);

struct SamplingWeights {
  std::vector<double> p;  // sums to 1

  /// Normalizes; throws on negative, non-finite or all-zero input.
  static SamplingWeights from_raw(std::span<const double> raw);
};

/// p_i = loss_i / sum(loss).
SamplingWeights importance_weights(std::span<const double> view_losses);
/// p_i proportional to 1 / count(category of item i).
SamplingWeights class_balance_weights(std::span<const std::string> item_categories);
/// Independent draws with replacement by inverse CDF.
std::vector<std::size_t> sample_batch(const SamplingWeights& weights,
                                      std::size_t n, std::uint64_t seed);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_PIPELINE_HPP
