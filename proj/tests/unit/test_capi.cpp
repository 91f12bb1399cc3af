// Copyright 2026 The fieldreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <fieldreg/fieldreg.h>
#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Mat = std::array<double, 16>;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fieldreg_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

std::array<double, 3> unit(std::array<double, 3> v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (double& x : v) x /= n;
  return v;
}

// Camera at `eye` looking at the origin; columns x, y, forward.
json camera_at(const std::array<double, 3>& eye, int size) {
  const auto z = unit({-eye[0], -eye[1], -eye[2]});
  const std::array<double, 3> up = std::abs(z[2]) > 0.9 ? std::array<double, 3>{0, 1, 0}
                                                         : std::array<double, 3>{0, 0, 1};
  const auto x = unit(cross(z, up));
  const auto y = cross(z, x);
  json pose = json::array();
  for (int r = 0; r < 3; ++r) pose.insert(pose.end(), {x[r], y[r], z[r], eye[r]});
  pose.insert(pose.end(), {0.0, 0.0, 0.0, 1.0});
  return {{"pose", pose}, {"fx", size}, {"fy", size}, {"cx", size / 2.0}, {"cy", size / 2.0},
          {"width", size}, {"height", size}};
}

json ring(int count, double dist, int size) {
  json cams = json::array();
  for (int i = 0; i < count; ++i) {
    const double phi = 2.0 * M_PI * i / count;
    const double z = (i % 2 == 0 ? 0.6 : -0.6);
    cams.push_back(camera_at({dist * std::cos(phi), dist * std::sin(phi), z}, size));
  }
  return cams;
}

json object_shape() {
  return {{"type", "union"},
          {"children",
           {{{"type", "box"}, {"center", {0.0, 0.0, -0.1}}, {"half_extents", {0.35, 0.2, 0.06}}, {"density", 50.0}},
            {{"type", "sphere"}, {"center", {0.2, 0.1, 0.1}}, {"radius", 0.12}, {"density", 50.0}},
            {{"type", "capsule"},
             {"a", {-0.25, -0.1, -0.05}},
             {"b", {-0.1, 0.15, 0.3}},
             {"radius", 0.07},
             {"density", 50.0}}}}};
}

Mat truth_matrix() {
  const double c = std::cos(0.1);
  const double s = std::sin(0.1);
  return {c, -s, 0, 0.05, s, c, 0, -0.03, 0, 0, 1, 0.02, 0, 0, 0, 1};
}

std::array<double, 3> apply(const Mat& m, const std::array<double, 3>& p) {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) out[r] = m[4 * r] * p[0] + m[4 * r + 1] * p[1] + m[4 * r + 2] * p[2] + m[4 * r + 3];
  return out;
}

const std::vector<std::array<double, 3>> kPoints = {
    {0.35, 0.2, -0.04}, {-0.35, -0.2, -0.16}, {0.2, 0.1, 0.22}, {-0.1, 0.15, 0.37}};

json points_json(const std::vector<std::array<double, 3>>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back({p[0], p[1], p[2]});
  return {{"points", arr}};
}

// Scene A holds the object, scene B the object moved by truth_matrix().
struct Pair {
  fs::path a;
  fs::path b;
};

Pair write_pair(const std::string& name, bool with_keypoints = true) {
  const fs::path root = fresh_dir(name);
  Pair p{root / "a", root / "b"};
  fs::create_directories(p.a);
  fs::create_directories(p.b);
  const Mat t = truth_matrix();
  json moved = {{"type", "instance"}, {"pose", json(t)}, {"child", object_shape()}};
  write_text(p.a / "scene.json", json({{"radius", 1.0}, {"cameras", ring(8, 2.5, 32)}, {"analytic", object_shape()}}).dump());
  write_text(p.b / "scene.json", json({{"radius", 1.0}, {"cameras", ring(8, 2.5, 32)}, {"analytic", moved}}).dump());
  if (with_keypoints) {
    std::vector<std::array<double, 3>> on_b;
    for (const auto& q : kPoints) on_b.push_back(apply(t, q));
    write_text(p.a / "keypoints.json", points_json(kPoints).dump());
    write_text(p.b / "keypoints.json", points_json(on_b).dump());
  }
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FIELDREG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

Mat identity() { return {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}; }

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::string(fr_version()) == "0.1.0");
  CHECK(std::string(fr_status_string(FR_OK)) == "Ok");
  CHECK(std::string(fr_status_string(FR_ERR_KEYPOINT_MISMATCH)) == "KeypointMismatch");
  CHECK(std::string(fr_status_string(FR_ERR_INTERNAL)) == "Internal");
  CHECK(std::string(fr_status_string(static_cast<fr_status>(50))) == "Unknown");
}

TEST_CASE("scene handle lifecycle and rendering") {
  fr_scene* scene = nullptr;
  const fs::path missing = fresh_dir("missing");
  CHECK(fr_scene_open(missing.c_str(), &scene) == FR_ERR_MALFORMED_MANIFEST);
  CHECK(scene == nullptr);
  CHECK(std::string(fr_last_error_message()).size() > 0);

  const Pair p = write_pair("scene");
  REQUIRE(fr_scene_open(p.a.c_str(), &scene) == FR_OK);
  fr_scene_info info{};
  REQUIRE(fr_scene_get_info(scene, &info) == FR_OK);
  CHECK(info.radius == 1.0);
  CHECK(info.num_views == 8);
  CHECK(info.analytic == 1);
  CHECK(info.has_emission == 1);

  const fs::path png = p.a / "view.png";
  const fs::path pfm = p.a / "view.pfm";
  REQUIRE(fr_scene_render(scene, 2, 0, png.c_str(), pfm.c_str()) == FR_OK);
  const std::string bytes = read_text(png);
  REQUIRE(bytes.size() > 8);
  CHECK(bytes.substr(1, 3) == "PNG");
  CHECK(read_text(pfm).rfind("Pf\n32 32\n", 0) == 0);
  CHECK(fr_scene_render(scene, 8, 0, png.c_str(), nullptr) == FR_ERR_OUT_OF_RANGE);
  CHECK(fr_scene_render(scene, -1, 0, png.c_str(), nullptr) == FR_ERR_OUT_OF_RANGE);

  size_t count = 0;
  const fs::path xyz = p.a / "cloud.xyz";
  REQUIRE(fr_scene_export_point_cloud(scene, 16, xyz.c_str(), &count) == FR_OK);
  CHECK(count > 0);
  std::istringstream lines(read_text(xyz));
  size_t rows = 0;
  double x = 0, y = 0, z = 0;
  while (lines >> x >> y >> z) {
    ++rows;
    CHECK(x * x + y * y + z * z < 1.0);
  }
  CHECK(rows == count);

  std::vector<double> pts(3 * 50);
  size_t written = 0;
  REQUIRE(fr_scene_sample_surface(scene, 50, 3, pts.data(), &written) == FR_OK);
  CHECK(written == 50);
  fr_scene_close(scene);
  fr_scene_close(nullptr);
}

TEST_CASE("distill writes the surface fields") {
  const Pair p = write_pair("distill");
  fr_distill_options opts;
  fr_distill_options_default(&opts);
  CHECK(opts.resolution > 0);
  const double sigmas[] = {0.05, 0.1};
  opts.resolution = 16;
  opts.sigmas = sigmas;
  opts.num_sigmas = 2;
  REQUIRE(fr_distill(p.a.c_str(), &opts) == FR_OK);
  CHECK(fs::exists(p.a / "distilled" / "surface"));
  opts.epsilon = 1.5;
  CHECK(fr_distill(p.a.c_str(), &opts) == FR_ERR_INVALID_ARGUMENT);
}

TEST_CASE("register through the C API") {
  const Pair p = write_pair("register");
  fr_register_options opts;
  fr_register_options_default(&opts);
  const char* overrides[] = {"total_steps=200", "warmup_steps=100"};
  const fs::path trace = p.a.parent_path() / "trace.ldjson";
  const fs::path result = p.a.parent_path() / "result.json";
  opts.overrides = overrides;
  opts.num_overrides = 2;
  opts.restarts = 2;
  opts.resolution = 24;
  opts.trace_path = trace.c_str();
  opts.result_path = result.c_str();
  Mat out{};
  int chosen = -1;
  REQUIRE(fr_register(p.a.c_str(), p.b.c_str(), &opts, out.data(), &chosen) == FR_OK);
  CHECK((chosen == 0 || chosen == 1));
  CHECK(out[12] == 0.0);
  CHECK(out[15] == 1.0);
  // Columns of the rotation stay orthonormal.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double dot = 0.0;
      for (int r = 0; r < 3; ++r) dot += out[4 * r + a] * out[4 * r + b];
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-9));
    }
  }

  const json res = json::parse(read_text(result));
  CHECK(res.at("chosen_restart") == chosen);
  CHECK(res.at("restart_traces").size() == 2);
  CHECK(res.at("transform").size() == 4);
  std::istringstream lines(read_text(trace));
  std::string line;
  size_t records = 0;
  while (std::getline(lines, line)) {
    const json r = json::parse(line);
    CHECK(r.contains("phase"));
    ++records;
  }
  CHECK(records >= 2);

  const char* bad[] = {"no_such_key=1"};
  opts.overrides = bad;
  opts.num_overrides = 1;
  CHECK(fr_register(p.a.c_str(), p.b.c_str(), &opts, out.data(), &chosen) == FR_ERR_INVALID_ARGUMENT);

  const Pair bare = write_pair("register_bare", false);
  opts.num_overrides = 0;
  CHECK(fr_register(bare.a.c_str(), bare.b.c_str(), &opts, out.data(), &chosen) == FR_ERR_IO);
}

TEST_CASE("metrics through the C API") {
  Mat gt = identity();
  Mat pred = identity();
  pred[3] = 0.03;
  double dt = 0, dr = 0;
  int gimbal = -1;
  REQUIRE(fr_pose_error(pred.data(), gt.data(), &dt, &dr, &gimbal) == FR_OK);
  CHECK(dt == doctest::Approx(0.03 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(dr == doctest::Approx(0.0));
  CHECK(gimbal == 0);

  const double verts[] = {0, 0, 0, 1, 0, 0};
  double add = 0;
  REQUIRE(fr_add3d(verts, 2, pred.data(), gt.data(), &add) == FR_OK);
  CHECK(add == doctest::Approx(0.03));
  CHECK(fr_add3d(verts, 0, pred.data(), gt.data(), &add) == FR_ERR_EMPTY_MESH);
  const double same[] = {1, 1, 1, 1, 1, 1};
  CHECK(fr_add3d(same, 2, pred.data(), gt.data(), &add) == FR_ERR_ZERO_DIAMETER);
}

TEST_CASE("service start and stop") {
  const fs::path root = fresh_dir("service");
  fr_service* svc = nullptr;
  REQUIRE(fr_service_start("127.0.0.1", 0, root.c_str(), 1, 16, &svc) == FR_OK);
  CHECK(fr_service_port(svc) > 0);
  fr_service_stop(svc);
  fr_service_destroy(svc);
}

TEST_CASE("command line exit codes") {
  CHECK(run_cli("--no-such-flag") == 2);
  CHECK(run_cli("render") == 2);

  const fs::path voxel = fresh_dir("cli_voxel");
  write_text(voxel / "scene.json",
             R"({"radius": 1.0, "grid": {"res_x": 4, "res_y": 4, "res_z": 4, "origin": [-1, -1, -1], "spacing": 0.5}})");
  CHECK(run_cli("distill " + voxel.string() + " --resolution 8") == 2);

  const Pair p = write_pair("cli");
  CHECK(run_cli("render " + p.a.string() + " --view 99 --out " + (p.a / "v.png").string()) == 2);
  CHECK(run_cli("render " + p.a.string() + " --view 1 --out " + (p.a / "v.png").string()) == 0);
  CHECK(fs::exists(p.a / "v.png"));

  const fs::path kp = p.a.parent_path() / "mismatch.json";
  json a = points_json(kPoints);
  json b = points_json({kPoints[0], kPoints[1], kPoints[2]});
  write_text(kp, json({{"a", a}, {"b", b}}).dump());
  CHECK(run_cli("register " + p.a.string() + " " + p.b.string() + " --resolution 16 --keypoints " + kp.string()) == 4);

  const Pair bare = write_pair("cli_bare", false);
  CHECK(run_cli("register " + bare.a.string() + " " + bare.b.string() + " --resolution 16") == 3);

  const fs::path pred = p.a.parent_path() / "pred.json";
  const fs::path gt = p.a.parent_path() / "gt.json";
  write_text(pred, json(truth_matrix()).dump());
  write_text(gt, json(truth_matrix()).dump());
  const fs::path report = p.a.parent_path() / "report.json";
  CHECK(run_cli("eval --pred " + pred.string() + " --gt " + gt.string() + " --scene " + p.a.string() +
                " --out " + report.string()) == 0);
  const json r = json::parse(read_text(report));
  CHECK(r.dump().find("add") != std::string::npos);
}
