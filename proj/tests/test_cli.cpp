#include "support.hpp"

#include "shapegrasp/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace shapegrasp;

namespace {

// Runs the CLI with stdout/stderr captured under `dir`; returns the exit
// code.
int run(const fs::path& dir, const std::string& args) {
  const std::string cmd = std::string("\"") + SHAPEGRASP_CLI_PATH + "\" " + args + " >\"" +
                          (dir / "stdout.txt").string() + "\" 2>\"" +
                          (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path write_config(const fs::path& dir) {
  Json c;
  c["pipeline"] = testsupport::small_config();
  c["eval"] = {{"samples", 20000}, {"points", 2000}};
  c["planner"] = {{"restarts", 8}};
  write_json(dir / "config.json", c);
  return dir / "config.json";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
  const auto dir = testsupport::scratch_dir("cli_usage");
  CHECK(run(dir, "") == 2);
  CHECK(run(dir, "frobnicate") == 2);
  CHECK(run(dir, "--help") == 0);
  CHECK(read_text(dir / "stdout.txt").find("grasp-plan") != std::string::npos);
  CHECK(run(dir, "preprocess " + q(dir)) == 2);  // no --out
  CHECK(run(dir, "grasp-plan " + q(dir / "missing.off")) == 2);
  CHECK(run(dir, "--jobs 0 grasp-plan " + q(dir / "missing.off")) == 2);
  write_text(dir / "bad.json", R"({"pipeline": {"views": 3, "colour": 1}})");
  save_mesh(make_tetrahedron(), dir / "t.off");
  CHECK(run(dir, "--config " + q(dir / "bad.json") + " grasp-plan -n 1 " + q(dir / "t.off")) == 2);
  CHECK(read_text(dir / "stderr.txt").find("colour") != std::string::npos);
  CHECK(run(dir, "complete --out " + q(dir / "x.ply")) == 2);  // neither --grid nor --mesh
}

TEST_CASE("preprocess: corrupt input exits 1 but keeps going") {
  const auto dir = testsupport::scratch_dir("cli_pre");
  const auto corpus = dir / "corpus";
  fs::create_directories(corpus / "junk");
  save_mesh(make_box(Vec3(-0.3, -0.2, -0.1), Vec3(0.3, 0.2, 0.1)), corpus / "junk" / "slab.off");
  write_text(corpus / "junk" / "broken.ply", "ply\nformat ascii 1.0\nelement vertex 3\n");
  const auto cfg = write_config(dir);
  CHECK(run(dir, "--config " + q(cfg) + " preprocess " + q(corpus) + " --out " + q(dir / "out")) == 1);
  const auto m = Manifest::from_json(read_json(dir / "out" / "manifest.json"));
  REQUIRE(m.objects.size() == 2);
  CHECK(m.objects[0].failed);
  CHECK_FALSE(m.objects[1].failed);

  fs::remove(corpus / "junk" / "broken.ply");
  CHECK(run(dir, "--config " + q(cfg) + " preprocess " + q(corpus) + " --out " + q(dir / "out2")) == 0);
  CHECK(read_text(dir / "stdout.txt").find("ok 1 failed 0") != std::string::npos);

  CHECK(run(dir, "dataset-stats " + q(dir / "out2" / "manifest.json") + " --out " + q(dir / "stats.json")) == 0);
  CHECK(read_json(dir / "stats.json")["objects"] == 1);
}

TEST_CASE("eval on an identical pair") {
  const auto dir = testsupport::scratch_dir("cli_eval");
  save_mesh(make_icosphere(Vec3::Zero(), 0.4, 3), dir / "a.ply");
  const auto cfg = write_config(dir);
  CHECK(run(dir, "--config " + q(cfg) + " eval --gt " + q(dir / "a.ply") + " --pred " + q(dir / "a.ply") +
                     " --out " + q(dir / "r.json")) == 0);
  const auto r = read_json(dir / "r.json");
  const auto& row = r["rows"][0];
  CHECK(row["volumetric"]["iou"].get<double>() == 1.0);
  CHECK(row["surface"]["chamfer_l1"].get<double>() < 0.02);
  CHECK(read_text(dir / "stdout.txt").find("IoU") != std::string::npos);
}

TEST_CASE("complete extracts a closed surface from the ground-truth field") {
  const auto dir = testsupport::scratch_dir("cli_complete");
  save_mesh(make_icosphere(Vec3::Zero(), 0.4, 3), dir / "s.ply");
  CHECK(run(dir, "complete --mesh " + q(dir / "s.ply") + " --resolution 32 --out " + q(dir / "c.ply")) == 0);
  CHECK(is_watertight(load_mesh(dir / "c.ply")));
  CHECK(fs::exists(sidecar_path(dir / "c.ply")));
}

TEST_CASE("grasp-plan is deterministic across runs and worker counts") {
  const auto dir = testsupport::scratch_dir("cli_grasp");
  save_mesh(make_box(Vec3::Constant(-0.5), Vec3::Constant(0.5)), dir / "cube.off");
  const auto cfg = write_config(dir);
  const std::string base = "--config " + q(cfg) + " --seed 5 ";
  const std::string tail = " grasp-plan -n 3 --object-size 0.05 " + q(dir / "cube.off") + " --out ";
  CHECK(run(dir, base + "--jobs 1" + tail + q(dir / "a.json")) == 0);
  CHECK(run(dir, base + "--jobs 1" + tail + q(dir / "b.json")) == 0);
  CHECK(run(dir, base + "--jobs 2" + tail + q(dir / "c.json")) == 0);
  const auto a = read_text(dir / "a.json");
  CHECK(a == read_text(dir / "b.json"));
  CHECK(a == read_text(dir / "c.json"));
  CHECK(grasps_from_json(a).size() == 3);

  CHECK(run(dir, base + "grasp-eval --object-size 0.05 " + q(dir / "cube.off") + " " + q(dir / "a.json") +
                     " --out " + q(dir / "e.json")) == 0);
  const auto e = read_json(dir / "e.json");
  REQUIRE(e["grasps"].size() == 3);
  for (const auto& g : e["grasps"]) CHECK(g["trials"].size() == 6);
}

TEST_CASE("render writes the requested views") {
  const auto dir = testsupport::scratch_dir("cli_render");
  save_mesh(make_tetrahedron(), dir / "t.obj");
  const auto cfg = write_config(dir);
  CHECK(run(dir, "--config " + q(cfg) + " render " + q(dir / "t.obj") + " --views 3 --out " + q(dir / "out")) == 0);
  std::size_t kinect = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "out"))
    kinect += e.path().string().ends_with("_kinect.pfm");
  CHECK(kinect == 3);
}

}  // TEST_SUITE
