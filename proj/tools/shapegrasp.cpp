// Command-line front end. Exit codes: 0 ok, 1 computation failure (or a
// failed object / invariant), 2 usage error.

#include "shapegrasp/grasp.hpp"
#include "shapegrasp/implicit.hpp"
#include "shapegrasp/io.hpp"
#include "shapegrasp/metrics.hpp"
#include "shapegrasp/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <set>

using namespace shapegrasp;

namespace {

constexpr int kOk = 0, kFailure = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Settings shared by every subcommand. The config file may carry the same
// values; flags given on the command line win.
struct CliConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  int verbosity = 0;
  PipelineConfig pipeline;
  PlannerParams planner;
  std::size_t eval_samples = 1'000'000;
  std::size_t eval_points = 100'000;
  double fscore_tau = kDefaultFscoreThreshold;

  Json to_json() const {
    Json j;
    j["seed"] = seed;
    j["jobs"] = jobs;
    j["verbosity"] = verbosity;
    j["pipeline"] = pipeline.to_json();
    j["planner"] = {{"restarts", planner.restarts},
                    {"hill_climb_steps", planner.hill_climb_steps},
                    {"mu", planner.model.mu},
                    {"cone_edges", planner.model.cone_edges},
                    {"translation", planner.robustness.translation},
                    {"joint_tolerance_deg", planner.robustness.joint_tolerance * 180 / M_PI},
                    {"devaluation", planner.robustness.devaluation}};
    j["eval"] = {{"samples", eval_samples},
                 {"points", eval_points},
                 {"fscore_tau", fscore_tau}};
    return j;
  }
};

void check_keys(const Json& j, const std::set<std::string>& known,
                const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw UsageError("unknown config key " + where + "." + k);
}

CliConfig load_config(const std::string& path) {
  CliConfig c;
  if (path.empty()) return c;
  Json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  check_keys(j, {"seed", "jobs", "verbosity", "pipeline", "planner", "eval"}, "config");
  try {
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.verbosity = j.value("verbosity", c.verbosity);
    if (j.contains("pipeline")) c.pipeline = PipelineConfig::from_json(j["pipeline"]);
    if (j.contains("planner")) {
      const Json& p = j["planner"];
      check_keys(p, {"restarts", "hill_climb_steps", "mu", "cone_edges", "translation",
                     "joint_tolerance_deg", "devaluation"},
                 "config.planner");
      c.planner.restarts = p.value("restarts", c.planner.restarts);
      c.planner.hill_climb_steps = p.value("hill_climb_steps", c.planner.hill_climb_steps);
      c.planner.model.mu = p.value("mu", c.planner.model.mu);
      c.planner.model.cone_edges = p.value("cone_edges", c.planner.model.cone_edges);
      c.planner.robustness.translation =
          p.value("translation", c.planner.robustness.translation);
      c.planner.robustness.joint_tolerance =
          p.value("joint_tolerance_deg", 23.0) * M_PI / 180;
      c.planner.robustness.devaluation =
          p.value("devaluation", c.planner.robustness.devaluation);
      c.planner.robustness.validate();
    }
    if (j.contains("eval")) {
      const Json& e = j["eval"];
      check_keys(e, {"samples", "points", "fscore_tau"}, "config.eval");
      c.eval_samples = e.value("samples", c.eval_samples);
      c.eval_points = e.value("points", c.eval_points);
      c.fscore_tau = e.value("fscore_tau", c.fscore_tau);
    }
  } catch (const Json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

void echo(const CliConfig& c, const char* command) {
  if (c.verbosity > 0)
    std::cerr << "# " << command << " effective config\n" << c.to_json().dump(2) << "\n";
}

TriangleMesh load_normalized(const std::string& path, bool normalize) {
  TriangleMesh mesh = load_mesh(path);
  if (normalize) mesh = normalize_unit_cube(mesh).first;
  return mesh;
}

// ---------------------------------------------------------------- commands

int cmd_preprocess(const CliConfig& c, const std::string& corpus, const std::string& out) {
  const Manifest m = run_corpus(corpus, out, c.pipeline, c.seed);
  std::size_t failed = 0;
  for (const auto& o : m.objects) {
    if (o.failed) {
      ++failed;
      std::cerr << "failed: " << o.id << " at " << o.failed_stage << ": " << o.error << "\n";
    }
  }
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
  const std::string hash = sha256_file(fs::path(out) / "manifest.json");
  std::cout << "objects " << m.objects.size() << " ok " << m.objects.size() - failed
            << " failed " << failed << "\nmanifest " << (fs::path(out) / "manifest.json").string()
            << " sha256 " << hash << "\n";
  return failed ? kFailure : kOk;
}

int cmd_render(const CliConfig& c, const std::string& mesh_path, const std::string& out,
               int views, bool augment) {
  ObjectRecord r;
  r.id = fs::path(mesh_path).stem().string();
  r.category = "default";
  r.raw = mesh_path;
  const auto [normalized, t] = normalize_unit_cube(load_mesh(mesh_path));
  r.normalization = t;
  r.normalized = r.id + "/mesh/normalized.ply";
  save_mesh(normalized, fs::path(out) / r.normalized);
  generate_views(r, views, augment, c.pipeline, out, c.seed);
  Json doc = r.to_json();
  doc["config"] = c.to_json();
  write_json(fs::path(out) / r.id / "views.json", doc);
  std::cout << "views " << r.views.size() << " in " << (fs::path(out) / r.views_dir).string()
            << "\n";
  return kOk;
}

int cmd_complete(const CliConfig& c, const std::string& grid_path,
                 const std::string& mesh_path, const std::string& out,
                 int resolution, double iso, bool normalize) {
  OccupancyGrid grid;
  if (!grid_path.empty()) {
    grid = load_grid(grid_path);
  } else {
    auto bvh = std::make_shared<const TriangleBvh>(load_normalized(mesh_path, normalize));
    const Eigen::AlignedBox3d box(Vec3::Constant(-0.55), Vec3::Constant(0.55));
    grid = evaluate_grid(*ground_truth_field(bvh), Eigen::Vector3i::Constant(resolution), box);
  }
  const MarchingCubesResult mc = marching_cubes(grid, iso);
  if (mc.empty) {
    std::cerr << "iso level " << iso << " is outside the grid's value range\n";
    return kFailure;
  }
  save_mesh(mc.mesh, out);
  Json report = {{"output", out},
                 {"triangles", mc.mesh.triangle_count()},
                 {"watertight", is_watertight(mc.mesh)},
                 {"iso", iso},
                 {"source", grid_path.empty() ? "ground truth field" : "imported grid"},
                 {"config", c.to_json()}};
  write_json(sidecar_path(out), report);
  std::cout << report.dump(2) << "\n";
  return kOk;
}

int cmd_eval(const CliConfig& c, const std::string& gt_path, const std::string& pred_path,
             const std::string& name, const std::string& out, bool normalize) {
  TriangleMesh gt = load_mesh(gt_path);
  TriangleMesh pred = load_mesh(pred_path);
  if (normalize) {
    const RigidScaleTransform t = unit_cube_transform(gt.vertices());
    gt = transformed(gt, t);
    pred = transformed(pred, t);
  }
  const auto gt_bvh = std::make_shared<const TriangleBvh>(gt);
  const auto pred_bvh = std::make_shared<const TriangleBvh>(pred);
  MetricRow row;
  row.model = name;
  row.volumetric = volumetric_metrics(mesh_occupancy(gt_bvh), mesh_occupancy(pred_bvh),
                                      c.eval_samples, derive_seed(c.seed, 1));
  const auto a = sample_surface(pred, c.eval_points, derive_seed(c.seed, 2));
  const auto b = sample_surface(gt, c.eval_points, derive_seed(c.seed, 3));
  row.surface = surface_fscore(a, b, c.fscore_tau);
  const std::vector<MetricRow> rows{row};
  std::cout << format_metric_table(rows);
  Json doc = Json::parse(metric_rows_json(rows));
  Json report = {{"rows", doc}, {"config", c.to_json()}};
  if (!out.empty()) write_json(out, report);
  const auto& v = *row.volumetric;
  const bool sane = v.iou >= 0 && v.iou <= 1 && std::isfinite(row.surface->chamfer_l1);
  return sane ? kOk : kFailure;
}

TriangleMesh grasp_object(const std::string& path, double object_size) {
  TriangleMesh mesh = load_mesh(path);
  if (object_size > 0) {
    mesh = normalize_unit_cube(mesh).first;
    RigidScaleTransform t;
    t.scale = Vec3::Constant(object_size);
    mesh = transformed(mesh, t);
  }
  return mesh;
}

int cmd_grasp_plan(const CliConfig& c, const std::string& mesh_path, std::size_t n,
                   double object_size, const std::string& hand_path,
                   const std::string& out) {
  const TriangleBvh bvh(grasp_object(mesh_path, object_size));
  const HandModel hand =
      hand_path.empty() ? HandModel::standard() : hand_from_json(read_text(hand_path));
  const PlanResult plan = plan_grasps(hand, bvh, n, c.seed, c.planner);
  const std::string text = grasps_to_json(plan.grasps);
  if (out.empty() || out == "-")
    std::cout << text << "\n";
  else
    write_text(out, text + "\n");
  std::cerr << "restarts " << plan.restarts << " feasible " << plan.feasible
            << " force-closure " << plan.force_closure << " returned "
            << plan.grasps.size() << "\n";
  if (plan.grasps.empty() && n > 0) {
    std::cerr << "no feasible grasp found\n";
    return kFailure;
  }
  return kOk;
}

int cmd_grasp_eval(const CliConfig& c, const std::string& mesh_path,
                   const std::string& grasps_path, double object_size,
                   const std::string& hand_path, const std::string& out) {
  const TriangleBvh bvh(grasp_object(mesh_path, object_size));
  const HandModel hand =
      hand_path.empty() ? HandModel::standard() : hand_from_json(read_text(hand_path));
  const std::vector<Grasp> grasps = grasps_from_json(read_text(grasps_path));
  Json reports = Json::array();
  bool invariant_ok = true;
  for (const auto& g : grasps) {
    const RobustnessReport rep =
        robust_quality(hand, g, bvh, c.planner.robustness, c.planner.model);
    invariant_ok = invariant_ok &&
                   (rep.s_prime == rep.s ||
                    rep.s_prime == c.planner.robustness.devaluation * rep.s);
    Json trials = Json::array();
    for (const auto& t : rep.trials)
      trials.push_back({{"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
                        {"max_joint_change_deg", t.max_joint_change * 180 / M_PI},
                        {"joints_ok", t.joints_ok},
                        {"contacts_ok", t.contacts_ok}});
    reports.push_back({{"s", rep.s},
                       {"s_prime", rep.s_prime},
                       {"devalued", rep.devalued},
                       {"trials", trials}});
    std::printf("s %.6f  s' %.6f  devalued %s\n", rep.s, rep.s_prime,
                rep.devalued ? "true" : "false");
  }
  Json doc = {{"grasps", reports}, {"config", c.to_json()}};
  if (!out.empty()) write_json(out, doc);
  return invariant_ok ? kOk : kFailure;
}

int cmd_dataset_stats(const CliConfig& c, const std::string& manifest_path,
                      const std::string& losses_path, std::size_t draws,
                      const std::string& out) {
  const Manifest m = Manifest::from_json(read_json(manifest_path));
  std::map<std::string, std::size_t> per_category;
  std::vector<std::string> categories;
  std::size_t failed = 0, train = 0, val = 0;
  for (const auto& o : m.objects) {
    if (o.failed) {
      ++failed;
      continue;
    }
    ++per_category[o.category];
    categories.push_back(o.category);
  }
  for (const auto& [id, s] : m.split) (s == Split::Train ? train : val)++;
  Json doc;
  doc["objects"] = m.objects.size();
  doc["failed"] = failed;
  doc["train"] = train;
  doc["val"] = val;
  doc["categories"] = per_category;
  if (!categories.empty()) {
    const SamplingWeights w = class_balance_weights(categories);
    Json cw = Json::object();
    for (std::size_t i = 0; i < categories.size(); ++i) cw[categories[i]] = w.p[i];
    doc["class_balance_item_weight"] = cw;
  }
  std::printf("%-20s %8s %12s\n", "category", "objects", "item weight");
  for (const auto& [cat, n] : per_category)
    std::printf("%-20s %8zu %12.6f\n", cat.c_str(), n,
                doc["class_balance_item_weight"][cat].get<double>());
  std::printf("train %zu  val %zu  failed %zu\n", train, val, failed);
  if (!losses_path.empty()) {
    const auto losses = read_json(losses_path).get<std::vector<double>>();
    const SamplingWeights w = importance_weights(losses);
    const auto idx = sample_batch(w, draws, derive_seed(c.seed, 9));
    std::vector<double> freq(losses.size(), 0.0);
    for (auto i : idx) freq[i] += 1.0 / static_cast<double>(draws);
    doc["importance"] = {{"weights", w.p}, {"draws", draws}, {"frequencies", freq}};
    std::printf("importance preview over %zu draws:\n", draws);
    for (std::size_t i = 0; i < losses.size(); ++i)
      std::printf("  view %zu  weight %.4f  drawn %.4f\n", i, w.p[i], freq[i]);
  }
  doc["config"] = c.to_json();
  if (!out.empty()) write_json(out, doc);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape completion data generation and grasp planning tools"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  int verbose = 0;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "global seed");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output path");
  app.add_flag("-v,--verbose", verbose, "echo the effective config to stderr");

  auto* pre = app.add_subcommand("preprocess", "run the data pipeline over a corpus");
  std::string corpus;
  pre->add_option("corpus", corpus, "directory of meshes")->required()->check(CLI::ExistingDirectory);

  auto* render = app.add_subcommand("render", "render views of one mesh");
  std::string render_mesh;
  int render_views = -1;
  bool augment = false;
  render->add_option("mesh", render_mesh)->required()->check(CLI::ExistingFile);
  render->add_option("--views", render_views, "number of views");
  render->add_flag("--scale-augment", augment, "random upright scale per view");

  auto* complete = app.add_subcommand("complete", "extract a surface from an occupancy grid");
  std::string grid_path, complete_mesh;
  int resolution = 128;
  double iso = 0.5;
  bool complete_normalize = false;
  auto* grid_opt = complete->add_option("--grid", grid_path, "imported occupancy grid")
                       ->check(CLI::ExistingFile);
  complete->add_option("--mesh", complete_mesh, "mesh for the ground-truth field")
      ->check(CLI::ExistingFile)
      ->excludes(grid_opt);
  complete->add_option("--resolution", resolution)->check(CLI::Range(2, 1024));
  complete->add_option("--iso", iso);
  complete->add_flag("--normalize", complete_normalize, "normalize the mesh first");

  auto* eval = app.add_subcommand("eval", "IoU, F-score and Chamfer-L1 of a prediction");
  std::string gt_path, pred_path, model_name = "prediction";
  bool eval_normalize = false;
  eval->add_option("--gt", gt_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--name", model_name, "row label");
  eval->add_flag("--normalize", eval_normalize, "normalize both by the ground truth box");

  auto* plan = app.add_subcommand("grasp-plan", "plan grasps on a mesh");
  std::string plan_mesh, hand_path;
  std::size_t n_grasps = 10;
  double object_size = 0;
  plan->add_option("mesh", plan_mesh)->required()->check(CLI::ExistingFile);
  plan->add_option("-n,--count", n_grasps, "grasps to return");
  plan->add_option("--object-size", object_size,
                   "normalize and scale the longest side to this many meters");
  plan->add_option("--hand", hand_path, "hand model JSON")->check(CLI::ExistingFile);

  auto* geval = app.add_subcommand("grasp-eval", "robustness report for grasps");
  std::string geval_mesh, grasps_path;
  geval->add_option("mesh", geval_mesh)->required()->check(CLI::ExistingFile);
  geval->add_option("grasps", grasps_path)->required()->check(CLI::ExistingFile);
  geval->add_option("--object-size", object_size);
  geval->add_option("--hand", hand_path)->check(CLI::ExistingFile);

  auto* stats = app.add_subcommand("dataset-stats", "class weights and sampler preview");
  std::string manifest_path, losses_path;
  std::size_t draws = 100'000;
  stats->add_option("manifest", manifest_path)->required()->check(CLI::ExistingFile);
  stats->add_option("--losses", losses_path, "JSON list of per-view losses")
      ->check(CLI::ExistingFile);
  stats->add_option("--draws", draws);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    CliConfig c = load_config(config_path);
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
    if (verbose) c.verbosity = verbose;
    set_worker_count(c.jobs);

    if (pre->parsed()) {
      if (out.empty()) throw UsageError("preprocess needs --out");
      echo(c, "preprocess");
      return cmd_preprocess(c, corpus, out);
    }
    if (render->parsed()) {
      if (out.empty()) throw UsageError("render needs --out");
      echo(c, "render");
      return cmd_render(c, render_mesh, out,
                        render_views >= 0 ? render_views : c.pipeline.views, augment);
    }
    if (complete->parsed()) {
      if (grid_path.empty() == complete_mesh.empty())
        throw UsageError("complete needs exactly one of --grid or --mesh");
      if (out.empty()) throw UsageError("complete needs --out");
      echo(c, "complete");
      return cmd_complete(c, grid_path, complete_mesh, out, resolution, iso,
                          complete_normalize);
    }
    if (eval->parsed()) {
      echo(c, "eval");
      return cmd_eval(c, gt_path, pred_path, model_name, out, eval_normalize);
    }
    if (plan->parsed()) {
      echo(c, "grasp-plan");
      return cmd_grasp_plan(c, plan_mesh, n_grasps, object_size, hand_path, out);
    }
    if (geval->parsed()) {
      echo(c, "grasp-eval");
      return cmd_grasp_eval(c, geval_mesh, grasps_path, object_size, hand_path, out);
    }
    if (stats->parsed()) {
      echo(c, "dataset-stats");
      return cmd_dataset_stats(c, manifest_path, losses_path, draws, out);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
