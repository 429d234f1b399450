#include "shapegrasp/pipeline.hpp"

#include "shapegrasp/implicit.hpp"
#include "shapegrasp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace shapegrasp {

// ---------------------------------------------------------------- config

namespace {

// Reads known keys out of a JSON object and rejects whatever is left.
class KeyReader {
 public:
  KeyReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object())
      throw Error(ErrorKind::InvalidArgument, where_ + " must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::InvalidArgument,
                  where_ + "." + key + ": " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw Error(ErrorKind::InvalidArgument,
                    "unknown config key " + where_ + "." + key);
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, what);
  };
  require(watertight_views >= 1, "watertight_views must be >= 1");
  require(watertight_resolution >= 8, "watertight_resolution must be >= 8");
  require(decimate_fraction > 0 && decimate_fraction <= 1,
          "decimate_fraction must be in (0, 1]");
  require(min_component_fraction >= 0 && min_component_fraction < 1,
          "min_component_fraction must be in [0, 1)");
  require(views >= 0, "views must be >= 0");
  require(scale_min > 0 && scale_min <= scale_max, "bad scale range");
  require(object_size > 0, "object_size must be positive");
  require(view_distance_min > 0 && view_distance_min <= view_distance_max,
          "bad view distance range");
  require(grasps >= 0, "grasps must be >= 0");
  require(grasp_object_size > 0, "grasp_object_size must be positive");
  require(train_fraction > 0 && train_fraction < 1,
          "train_fraction must be in (0, 1)");
  require(queries.padding >= 0, "query padding must be >= 0");
  camera.validate();
  kinect.validate();
}

Json PipelineConfig::to_json() const {
  Json j;
  j["watertight_views"] = watertight_views;
  j["watertight_resolution"] = watertight_resolution;
  j["decimate_fraction"] = decimate_fraction;
  j["min_component_fraction"] = min_component_fraction;
  j["surface_samples"] = surface_samples;
  j["queries"] = {{"uniform_count", queries.uniform_count},
                  {"padding", queries.padding},
                  {"noise_stds", queries.noise_stds},
                  {"points_per_std", queries.points_per_std},
                  {"sphere_radii", queries.sphere_radii},
                  {"points_per_sphere", queries.points_per_sphere}};
  j["views"] = views;
  j["scale_augment"] = scale_augment;
  j["scale_min"] = scale_min;
  j["scale_max"] = scale_max;
  j["object_size"] = object_size;
  j["view_distance_min"] = view_distance_min;
  j["view_distance_max"] = view_distance_max;
  j["camera"] = {{"width", camera.width}, {"height", camera.height},
                 {"fx", camera.fx},       {"fy", camera.fy},
                 {"cx", camera.cx},       {"cy", camera.cy}};
  j["kinect"] = kinect_to_json(kinect);
  j["grasps"] = grasps;
  j["grasp_object_size"] = grasp_object_size;
  j["train_fraction"] = train_fraction;
  return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig c;
  KeyReader r(j, "config");
  r.read("watertight_views", c.watertight_views);
  r.read("watertight_resolution", c.watertight_resolution);
  r.read("decimate_fraction", c.decimate_fraction);
  r.read("min_component_fraction", c.min_component_fraction);
  r.read("surface_samples", c.surface_samples);
  if (const Json* q = r.child("queries")) {
    KeyReader qr(*q, "config.queries");
    qr.read("uniform_count", c.queries.uniform_count);
    qr.read("padding", c.queries.padding);
    qr.read("noise_stds", c.queries.noise_stds);
    qr.read("points_per_std", c.queries.points_per_std);
    qr.read("sphere_radii", c.queries.sphere_radii);
    qr.read("points_per_sphere", c.queries.points_per_sphere);
    qr.finish();
  }
  r.read("views", c.views);
  r.read("scale_augment", c.scale_augment);
  r.read("scale_min", c.scale_min);
  r.read("scale_max", c.scale_max);
  r.read("object_size", c.object_size);
  r.read("view_distance_min", c.view_distance_min);
  r.read("view_distance_max", c.view_distance_max);
  if (const Json* cam = r.child("camera")) {
    KeyReader cr(*cam, "config.camera");
    cr.read("width", c.camera.width);
    cr.read("height", c.camera.height);
    cr.read("fx", c.camera.fx);
    cr.read("fy", c.camera.fy);
    cr.read("cx", c.camera.cx);
    cr.read("cy", c.camera.cy);
    cr.finish();
  }
  if (const Json* k = r.child("kinect")) {
    KeyReader kr(*k, "config.kinect");
    kr.read("axial_base", c.kinect.axial_base);
    kr.read("axial_quadratic", c.kinect.axial_quadratic);
    kr.read("axial_reference_depth", c.kinect.axial_reference_depth);
    kr.read("lateral_std_px", c.kinect.lateral_std_px);
    kr.read("disparity_step_px", c.kinect.disparity_step_px);
    kr.read("grazing_threshold_deg", c.kinect.grazing_threshold_deg);
    kr.read("discontinuity_threshold", c.kinect.discontinuity_threshold);
    kr.read("discontinuity_radius_px", c.kinect.discontinuity_radius_px);
    kr.read("baseline", c.kinect.baseline);
    kr.finish();
  }
  r.read("grasps", c.grasps);
  r.read("grasp_object_size", c.grasp_object_size);
  r.read("train_fraction", c.train_fraction);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------- records

namespace {

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace

Json ObjectRecord::to_json() const {
  Json j;
  j["id"] = id;
  j["category"] = category;
  j["raw"] = raw;
  j["watertight"] = watertight;
  j["decimated"] = decimated;
  j["normalized"] = normalized;
  j["samples"] = samples;
  j["queries"] = queries;
  j["views_dir"] = views_dir;
  j["grasps"] = grasps;
  j["hashes"] = hashes;
  j["normalization"] = {{"translation", vec_json(normalization.translation)},
                        {"scale", vec_json(normalization.scale)}};
  Json vs = Json::array();
  for (const auto& v : views)
    vs.push_back({{"index", v.index}, {"scale_z", v.scale_z}, {"seed", v.seed},
                  {"files", v.files}});
  j["views"] = vs;
  j["status"] = failed ? "failed" : "ok";
  if (failed) {
    j["failed_stage"] = failed_stage;
    j["error"] = error;
  }
  return j;
}

ObjectRecord ObjectRecord::from_json(const Json& j) {
  ObjectRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.raw = j.at("raw").get<std::string>();
    r.watertight = j.value("watertight", "");
    r.decimated = j.value("decimated", "");
    r.normalized = j.value("normalized", "");
    r.samples = j.value("samples", "");
    r.queries = j.value("queries", std::vector<std::string>{});
    r.views_dir = j.value("views_dir", "");
    r.grasps = j.value("grasps", "");
    r.hashes = j.value("hashes", std::map<std::string, std::string>{});
    if (j.contains("normalization")) {
      r.normalization.translation = vec_from(j["normalization"].at("translation"));
      r.normalization.scale = vec_from(j["normalization"].at("scale"));
    }
    for (const auto& v : j.value("views", Json::array())) {
      ViewRecord vr;
      vr.index = v.at("index").get<int>();
      vr.scale_z = v.at("scale_z").get<double>();
      vr.seed = v.at("seed").get<std::uint64_t>();
      vr.files = v.at("files").get<std::map<std::string, std::string>>();
      r.views.push_back(vr);
    }
    r.failed = j.value("status", "ok") == "failed";
    r.failed_stage = j.value("failed_stage", "");
    r.error = j.value("error", "");
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("bad object record: ") + e.what());
  }
  return r;
}

Json Manifest::to_json() const {
  Json j;
  Json objs = Json::array();
  for (const auto& o : objects) objs.push_back(o.to_json());
  j["objects"] = objs;
  Json sp = Json::object();
  for (const auto& [id, s] : split) sp[id] = s == Split::Train ? "train" : "val";
  j["split"] = sp;
  j["config"] = config;
  j["seed"] = seed;
  j["warnings"] = warnings;
  return j;
}

Manifest Manifest::from_json(const Json& j) {
  Manifest m;
  try {
    for (const auto& o : j.at("objects")) m.objects.push_back(ObjectRecord::from_json(o));
    for (const auto& [id, s] : j.at("split").items()) {
      const std::string v = s.get<std::string>();
      if (v != "train" && v != "val")
        throw Error(ErrorKind::MalformedFile, "split must be train or val");
      m.split[id] = v == "train" ? Split::Train : Split::Val;
    }
    m.config = j.value("config", Json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("bad manifest: ") + e.what());
  }
  return m;
}

std::vector<ObjectRecord> discover_corpus(const fs::path& corpus) {
  if (!fs::is_directory(corpus))
    throw Error(ErrorKind::Io, "corpus directory not found: " + corpus.string());
  auto is_mesh = [](const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".off" || ext == ".obj" || ext == ".ply";
  };
  std::vector<ObjectRecord> out;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    if (entry.is_regular_file() && is_mesh(entry.path())) {
      ObjectRecord r;
      r.id = entry.path().stem().string();
      r.category = "default";
      r.raw = entry.path().string();
      out.push_back(r);
    } else if (entry.is_directory()) {
      for (const auto& sub : fs::directory_iterator(entry.path())) {
        if (!sub.is_regular_file() || !is_mesh(sub.path())) continue;
        ObjectRecord r;
        r.category = entry.path().filename().string();
        r.id = r.category + "_" + sub.path().stem().string();
        r.raw = sub.path().string();
        out.push_back(r);
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].id == out[i - 1].id)
      throw Error(ErrorKind::InvalidArgument, "duplicate object id " + out[i].id);
  return out;
}

std::uint64_t object_seed(std::uint64_t global_seed, const std::string& id) {
  return derive_seed(global_seed, fnv1a(id));
}

// ---------------------------------------------------------------- stages

namespace {

enum StageSeed : std::uint64_t { kSamples = 1, kQueries = 2, kViews = 3, kGrasps = 4 };

class ArtifactWriter {
 public:
  ArtifactWriter(const fs::path& root, ObjectRecord& record)
      : root_(root), record_(record) {}

  fs::path full(const std::string& rel) const { return root_ / rel; }

  // Hashes a written file and its sidecar, if any.
  void track(const std::string& rel) {
    record_.hashes[rel] = sha256_file(full(rel));
    const fs::path side = sidecar_path(full(rel));
    if (fs::exists(side))
      record_.hashes[rel + ".json"] = sha256_file(side);
  }

 private:
  fs::path root_;
  ObjectRecord& record_;
};

std::string view_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", index);
  return buf;
}

}  // namespace

ObjectRecord preprocess_object(ObjectRecord record, const PipelineConfig& config,
                               const fs::path& root, std::uint64_t seed) {
  ArtifactWriter out(root, record);
  const std::uint64_t oseed = object_seed(seed, record.id);
  const std::string dir = record.id;
  std::string stage = "load";
  try {
    TriangleMesh mesh = remove_degenerate_triangles(load_mesh(record.raw));
    if (mesh.empty()) throw Error(ErrorKind::EmptyGeometry, "no usable triangles");

    stage = "watertight";
    const TriangleMesh closed =
        make_watertight(mesh, config.watertight_views, config.watertight_resolution);
    record.watertight = dir + "/mesh/watertight.ply";
    save_mesh(closed, out.full(record.watertight));
    out.track(record.watertight);

    stage = "decimate";
    TriangleMesh reduced = decimate(closed, config.decimate_fraction).mesh;
    reduced = remove_small_components(reduced, config.min_component_fraction);
    if (!is_watertight(reduced))
      throw Error(ErrorKind::DegenerateGeometry, "decimated mesh is not closed");
    record.decimated = dir + "/mesh/decimated.ply";
    save_mesh(reduced, out.full(record.decimated));
    out.track(record.decimated);

    stage = "normalize";
    auto [normalized, transform] = normalize_unit_cube(reduced);
    record.normalization = transform;
    record.normalized = dir + "/mesh/normalized.ply";
    save_mesh(normalized, out.full(record.normalized));
    out.track(record.normalized);
    // Use the mesh as stored so later stages see identical coordinates.
    normalized = load_mesh(out.full(record.normalized));
    const std::string mesh_hash = record.hashes[record.normalized];

    stage = "samples";
    const std::uint64_t sample_seed = derive_seed(oseed, kSamples);
    record.samples = dir + "/queries/surface.bin";
    save_points(out.full(record.samples),
                sample_surface(normalized, config.surface_samples, sample_seed),
                {{"frame", "normalized"},
                 {"seed", sample_seed},
                 {"source_mesh_sha256", mesh_hash}});
    out.track(record.samples);

    stage = "queries";
    const TriangleBvh bvh(normalized);
    auto sets = generate_query_points(normalized, config.queries,
                                      derive_seed(oseed, kQueries));
    std::map<std::string, int> counter;
    for (auto& set : sets) {
      const std::string name = to_string(set.strategy);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s_%02d.bin", name.c_str(), counter[name]++);
      const std::string rel = dir + "/queries/" + buf;
      save_queries(out.full(rel), label_queries(bvh, std::move(set)), mesh_hash);
      out.track(rel);
      record.queries.push_back(rel);
    }
  } catch (const std::exception& e) {
    record.failed = true;
    record.failed_stage = stage;
    record.error = e.what();
  }
  return record;
}

std::vector<double> view_scales(int n, bool scale_augment,
                                const PipelineConfig& config, std::uint64_t seed) {
  std::vector<double> out(static_cast<std::size_t>(std::max(n, 0)), 1.0);
  if (!scale_augment) return out;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> u(config.scale_min, config.scale_max);
    out[i] = u(rng);
  }
  return out;
}

std::vector<ViewRecord> generate_views(ObjectRecord& record, int n,
                                       bool scale_augment,
                                       const PipelineConfig& config,
                                       const fs::path& root, std::uint64_t seed) {
  if (record.failed || record.normalized.empty())
    throw Error(ErrorKind::Precondition, "object has not been preprocessed");
  ArtifactWriter out(root, record);
  const TriangleMesh mesh = load_mesh(root / record.normalized);
  const std::uint64_t vseed = derive_seed(object_seed(seed, record.id), kViews);
  const auto scales = view_scales(n, scale_augment, config, vseed);
  record.views_dir = record.id + "/views";

  std::shared_ptr<const TriangleBvh> shared;
  auto scaled_bvh = [&](double sz) {
    RigidScaleTransform t;
    t.scale = Vec3(config.object_size, config.object_size, config.object_size * sz);
    return std::make_shared<const TriangleBvh>(transformed(mesh, t));
  };
  if (!scale_augment) shared = scaled_bvh(1.0);

  std::vector<ViewRecord> views;
  for (int i = 0; i < n; ++i) {
    ViewRecord v;
    v.index = i;
    v.scale_z = scales[i];
    // Scale draws use derive_seed(vseed, i); everything else hangs off a
    // second-level seed so the two never collide.
    v.seed = derive_seed(derive_seed(vseed, static_cast<std::uint64_t>(i)), 0x76);
    const auto bvh = shared ? shared : scaled_bvh(v.scale_z);
    const PinholeCamera camera =
        sample_views(1, config.view_distance_min, config.view_distance_max,
                     derive_seed(v.seed, 1), config.camera)[0];
    const RenderResult img = render_depth(*bvh, camera);
    const DepthImage kinect =
        simulate_kinect(img.depth, img.normals, camera, config.kinect,
                        derive_seed(v.seed, 2));

    const std::string base = record.views_dir + "/" + view_name(i);
    v.files["depth"] = base + "_depth.pfm";
    v.files["normal"] = base + "_normal.pfm";
    v.files["kinect"] = base + "_kinect.pfm";
    v.files["meta"] = base + ".json";
    write_pfm(out.full(v.files["depth"]), to_pfm(img.depth));
    write_pfm(out.full(v.files["normal"]), to_pfm(img.normals));
    write_pfm(out.full(v.files["kinect"]), to_pfm(kinect));
    Json meta;
    meta["camera"] = camera_to_json(camera);
    meta["scale_z"] = v.scale_z;
    meta["object_size"] = config.object_size;
    meta["seed"] = v.seed;
    meta["kinect"] = kinect_to_json(config.kinect);
    meta["depth_units"] = "meters along the optical axis, NaN = missing";
    write_json(out.full(v.files["meta"]), meta);
    for (const char* kind : {"depth", "normal", "kinect", "meta"})
      out.track(v.files[kind]);
    views.push_back(v);
  }
  record.views = views;
  return views;
}

void plan_object_grasps(ObjectRecord& record, const PipelineConfig& config,
                        const fs::path& root, std::uint64_t seed) {
  if (record.failed || record.normalized.empty())
    throw Error(ErrorKind::Precondition, "object has not been preprocessed");
  const TriangleMesh mesh = load_mesh(root / record.normalized);
  RigidScaleTransform t;
  t.scale = Vec3::Constant(config.grasp_object_size);
  const TriangleBvh bvh(transformed(mesh, t));
  const HandModel hand = HandModel::standard();
  const PlanResult plan =
      plan_grasps(hand, bvh, static_cast<std::size_t>(config.grasps),
                  derive_seed(object_seed(seed, record.id), kGrasps));
  record.grasps = record.id + "/grasps.json";
  write_text(root / record.grasps, grasps_to_json(plan.grasps) + "\n");
  ArtifactWriter(root, record).track(record.grasps);
}

Manifest split_dataset(Manifest manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1))
    throw Error(ErrorKind::InvalidArgument, "split fraction must be in (0, 1)");
  std::map<std::string, std::vector<std::string>> by_category;
  for (const auto& o : manifest.objects)
    if (!o.failed) by_category[o.category].push_back(o.id);
  manifest.split.clear();
  for (auto& [category, ids] : by_category) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, fnv1a(category)));
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(ids[i - 1], ids[pick(rng)]);
    }
    std::size_t val = 0;
    if (ids.size() >= 2) {
      val = static_cast<std::size_t>(
          std::llround((1.0 - fraction) * static_cast<double>(ids.size())));
      val = std::clamp<std::size_t>(val, 1, ids.size() - 1);
    } else {
      manifest.warnings.push_back("category '" + category +
                                  "' has one object; it goes to train only");
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
      manifest.split[ids[i]] = i < val ? Split::Val : Split::Train;
  }
  return manifest;
}

Manifest run_corpus(const fs::path& corpus, const fs::path& root,
                    const PipelineConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<ObjectRecord> records = discover_corpus(corpus);
  fs::create_directories(root);
  parallel_for(records.size(), [&](std::size_t i) {
    ObjectRecord r = preprocess_object(records[i], config, root, seed);
    if (!r.failed && config.views > 0) {
      try {
        generate_views(r, config.views, config.scale_augment, config, root, seed);
      } catch (const std::exception& e) {
        r.failed = true;
        r.failed_stage = "views";
        r.error = e.what();
      }
    }
    if (!r.failed && config.grasps > 0) {
      try {
        plan_object_grasps(r, config, root, seed);
      } catch (const std::exception& e) {
        r.failed = true;
        r.failed_stage = "grasps";
        r.error = e.what();
      }
    }
    records[i] = std::move(r);
  });

  Manifest m;
  m.objects = std::move(records);
  m.config = config.to_json();
  m.seed = seed;
  m = split_dataset(std::move(m), config.train_fraction, derive_seed(seed, 0x5));
  write_json(root / "manifest.json", m.to_json());
  return m;
}

// ---------------------------------------------------------------- samplers

SamplingWeights SamplingWeights::from_raw(std::span<const double> raw) {
  if (raw.empty()) throw Error(ErrorKind::InvalidArgument, "no weights");
  double total = 0;
  for (double w : raw) {
    if (!std::isfinite(w) || w < 0)
      throw Error(ErrorKind::InvalidArgument, "weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0))
    throw Error(ErrorKind::InvalidArgument, "all weights are zero");
  SamplingWeights out;
  out.p.reserve(raw.size());
  for (double w : raw) out.p.push_back(w / total);
  return out;
}

SamplingWeights importance_weights(std::span<const double> view_losses) {
  return SamplingWeights::from_raw(view_losses);
}

SamplingWeights class_balance_weights(std::span<const std::string> item_categories) {
  std::map<std::string, std::size_t> count;
  for (const auto& c : item_categories) ++count[c];
  std::vector<double> raw;
  raw.reserve(item_categories.size());
  for (const auto& c : item_categories) raw.push_back(1.0 / static_cast<double>(count[c]));
  return SamplingWeights::from_raw(raw);
}

std::vector<std::size_t> sample_batch(const SamplingWeights& weights,
                                      std::size_t n, std::uint64_t seed) {
  if (weights.p.empty()) throw Error(ErrorKind::InvalidArgument, "no weights");
  std::vector<double> cdf(weights.p.size());
  std::partial_sum(weights.p.begin(), weights.p.end(), cdf.begin());
  std::size_t last = 0;  // last index with positive weight
  for (std::size_t i = 0; i < weights.p.size(); ++i)
    if (weights.p[i] > 0) last = i;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, cdf.back());
  std::vector<std::size_t> out(n);
  for (auto& idx : out) {
    const double x = u(rng);
    idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), x) -
                                   cdf.begin());
    idx = std::min(idx, last);
  }
  return out;
}

}  // namespace shapegrasp
