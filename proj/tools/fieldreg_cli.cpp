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

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fieldreg/fieldreg.h"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInput = 2,
  kExitIo = 3,
  kExitKeypoints = 4,
  kExitNonFinite = 5,
};

int exit_code_for(fr_status status) {
  switch (status) {
    case FR_OK:
      return kExitOk;
    case FR_ERR_MALFORMED_MANIFEST:
    case FR_ERR_OUT_OF_RANGE:
    case FR_ERR_INVALID_ARGUMENT:
      return kExitInput;
    case FR_ERR_IO:
      return kExitIo;
    case FR_ERR_KEYPOINT_MISMATCH:
      return kExitKeypoints;
    case FR_ERR_NON_FINITE_LOSS:
      return kExitNonFinite;
    default:
      return kExitFailure;
  }
}

int report(fr_status status) {
  if (status != FR_OK) {
    std::cerr << "fieldreg: " << fr_status_string(status) << ": " << fr_last_error_message() << "\n";
  }
  return exit_code_for(status);
}

std::string scene_path(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  if (const char* root = std::getenv("FIELDREG_SCENES")) {
    const fs::path candidate = fs::path(root) / arg;
    if (fs::exists(candidate)) return candidate.string();
  }
  return arg;
}

bool read_text(const std::string& path, std::string& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::ostringstream ss;
  ss << f.rdbuf();
  out = ss.str();
  return true;
}

bool parse_matrix(const json& j, double m[16]) {
  const json& t = j.is_object() && j.contains("transform") ? j["transform"] : j;
  if (!t.is_array()) return false;
  if (t.size() == 16) {
    for (int i = 0; i < 16; ++i) m[i] = t[i].get<double>();
    return true;
  }
  if (t.size() != 4) return false;
  for (int r = 0; r < 4; ++r) {
    if (!t[r].is_array() || t[r].size() != 4) return false;
    for (int c = 0; c < 4; ++c) m[4 * r + c] = t[r][c].get<double>();
  }
  return true;
}

int load_matrix(const std::string& path, double m[16]) {
  std::string text;
  if (!read_text(path, text)) {
    std::cerr << "fieldreg: cannot read " << path << "\n";
    return kExitIo;
  }
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !parse_matrix(j, m)) {
    std::cerr << "fieldreg: " << path << " does not hold a 4x4 transform\n";
    return kExitInput;
  }
  return kExitOk;
}

int load_vertices(const std::string& path, std::vector<double>& xyz) {
  std::ifstream f(path);
  if (!f) {
    std::cerr << "fieldreg: cannot read " << path << "\n";
    return kExitIo;
  }
  double v = 0.0;
  while (f >> v) xyz.push_back(v);
  if (xyz.size() % 3 != 0) {
    std::cerr << "fieldreg: " << path << " must hold x y z triples\n";
    return kExitInput;
  }
  return kExitOk;
}

struct DistillArgs {
  std::string scene;
  int resolution = 128;
  double delta = 0.05;
  double epsilon = 0.5;
  std::vector<double> sigmas;
  std::uint64_t seed = 0;
  bool monte_carlo = false;
  int samples = 64;
};

int run_distill(const DistillArgs& a) {
  fr_distill_options o;
  fr_distill_options_default(&o);
  o.resolution = a.resolution;
  o.delta = a.delta;
  o.epsilon = a.epsilon;
  o.sigmas = a.sigmas.empty() ? nullptr : a.sigmas.data();
  o.num_sigmas = a.sigmas.size();
  o.monte_carlo = a.monte_carlo;
  o.samples = a.samples;
  o.seed = a.seed;
  const std::string dir = scene_path(a.scene);
  const int rc = report(fr_distill(dir.c_str(), &o));
  if (rc == kExitOk) std::cout << "distilled " << dir << "/distilled/surface\n";
  return rc;
}

struct RegisterArgs {
  std::string scene_a;
  std::string scene_b;
  std::string keypoints;
  std::string config;
  std::vector<std::string> overrides;
  int restarts = 10;
  int resolution = 128;
  std::optional<std::uint64_t> seed;
  std::string trace;
  std::string out;
};

int run_register(const RegisterArgs& a) {
  std::string config_text;
  if (!a.config.empty() && !read_text(a.config, config_text)) {
    std::cerr << "fieldreg: cannot read " << a.config << "\n";
    return kExitIo;
  }
  std::vector<std::string> overrides = a.overrides;
  if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
  std::vector<const char*> override_ptrs;
  for (const auto& s : overrides) override_ptrs.push_back(s.c_str());

  fr_register_options o;
  fr_register_options_default(&o);
  o.keypoints_path = a.keypoints.empty() ? nullptr : a.keypoints.c_str();
  o.config_json = config_text.empty() ? nullptr : config_text.c_str();
  o.overrides = override_ptrs.data();
  o.num_overrides = override_ptrs.size();
  o.restarts = a.restarts;
  o.resolution = a.resolution;
  o.trace_path = a.trace.empty() ? nullptr : a.trace.c_str();
  o.result_path = a.out.empty() ? nullptr : a.out.c_str();

  double T[16];
  int chosen = 0;
  const std::string da = scene_path(a.scene_a);
  const std::string db = scene_path(a.scene_b);
  const int rc = report(fr_register(da.c_str(), db.c_str(), &o, T, &chosen));
  if (rc != kExitOk) return rc;
  json matrix = json::array();
  for (int r = 0; r < 4; ++r) matrix.push_back({T[4 * r], T[4 * r + 1], T[4 * r + 2], T[4 * r + 3]});
  std::cout << json{{"transform", matrix}, {"chosen_restart", chosen}}.dump(2) << "\n";
  return kExitOk;
}

struct RenderArgs {
  std::string scene;
  int view = 0;
  int width = 0;
  std::string out = "view.png";
  std::string depth;
};

int run_render(const RenderArgs& a) {
  fr_scene* scene = nullptr;
  const std::string dir = scene_path(a.scene);
  if (const fr_status s = fr_scene_open(dir.c_str(), &scene); s != FR_OK) return report(s);
  const fr_status s = fr_scene_render(scene, a.view, a.width, a.out.c_str(), a.depth.empty() ? nullptr : a.depth.c_str());
  fr_scene_close(scene);
  return report(s);
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string scene;
  std::string vertices;
  std::string object = "object";
  std::string out;
  std::size_t samples = 2000;
};

int run_eval(const EvalArgs& a) {
  double pred[16];
  double gt[16];
  if (int rc = load_matrix(a.pred, pred); rc != kExitOk) return rc;
  if (int rc = load_matrix(a.gt, gt); rc != kExitOk) return rc;
  double dt = 0.0;
  double dr = 0.0;
  int gimbal = 0;
  if (int rc = report(fr_pose_error(pred, gt, &dt, &dr, &gimbal)); rc != kExitOk) return rc;

  std::vector<double> xyz;
  if (!a.vertices.empty()) {
    if (int rc = load_vertices(a.vertices, xyz); rc != kExitOk) return rc;
  } else if (!a.scene.empty()) {
    fr_scene* scene = nullptr;
    const std::string dir = scene_path(a.scene);
    if (const fr_status s = fr_scene_open(dir.c_str(), &scene); s != FR_OK) return report(s);
    xyz.resize(3 * a.samples);
    std::size_t n = 0;
    const fr_status s = fr_scene_sample_surface(scene, a.samples, 0, xyz.data(), &n);
    fr_scene_close(scene);
    if (s != FR_OK) return report(s);
    xyz.resize(3 * n);
  }
  json result = {{"object", a.object}, {"delta_t", dt}, {"delta_R", dr}, {"convention", "XYZ-intrinsic"},
                 {"rotation_residual", "R_pred * R_gt^T"}};
  std::optional<double> add;
  if (!xyz.empty()) {
    double v = 0.0;
    if (int rc = report(fr_add3d(xyz.data(), xyz.size() / 3, pred, gt, &v)); rc != kExitOk) return rc;
    add = v;
    result["add3d"] = v;
  } else {
    result["add3d"] = nullptr;
  }
  if (gimbal) result["gimbal_warning"] = true;
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) {
      std::cerr << "fieldreg: cannot write " << a.out << "\n";
      return kExitIo;
    }
    f << result.dump(2) << "\n";
  }
  std::printf("%-16s %12s %12s %14s\n", "object", "1e2*dt", "dR [deg]", "1e2*3D-ADD");
  if (add) {
    std::printf("%-16s %12.3f %12.3f %14.3f\n", a.object.c_str(), 100.0 * dt, dr, 100.0 * *add);
  } else {
    std::printf("%-16s %12.3f %12.3f %14s\n", a.object.c_str(), 100.0 * dt, dr, "-");
  }
  if (gimbal) std::fprintf(stderr, "fieldreg: warning: Euler pitch near +-90 deg, angles ill-conditioned\n");
  return kExitOk;
}

struct PointCloudArgs {
  std::string scene;
  int width = 0;
  std::string out = "points.xyz";
};

int run_export(const PointCloudArgs& a) {
  fr_scene* scene = nullptr;
  const std::string dir = scene_path(a.scene);
  if (const fr_status s = fr_scene_open(dir.c_str(), &scene); s != FR_OK) return report(s);
  std::size_t n = 0;
  const fr_status s = fr_scene_export_point_cloud(scene, a.width, a.out.c_str(), &n);
  fr_scene_close(scene);
  if (s == FR_OK) std::cout << "wrote " << n << " points to " << a.out << "\n";
  return report(s);
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string scenes;
  int restarts = 1;
  int resolution = 128;
};

int run_serve(ServeArgs a) {
  if (a.scenes.empty()) {
    const char* env = std::getenv("FIELDREG_SCENES");
    a.scenes = env ? env : ".";
  }
  fr_service* service = nullptr;
  if (const fr_status s = fr_service_start(a.host.c_str(), a.port, a.scenes.c_str(), a.restarts, a.resolution,
                                           &service);
      s != FR_OK) {
    return report(s);
  }
  std::cout << "serving " << a.scenes << " on http://" << a.host << ":" << fr_service_port(service) << std::endl;
  fr_service_wait(service);
  fr_service_destroy(service);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rigid registration of density fields"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fr_version()));

  DistillArgs distill;
  auto* d = app.add_subcommand("distill", "Extract the surface field and its smoothed levels");
  d->add_option("scene", distill.scene, "Scene directory")->required();
  d->add_option("--resolution", distill.resolution, "Grid nodes per axis")->check(CLI::Range(2, 1024));
  d->add_option("--delta", distill.delta, "Surface half-thickness")->check(CLI::PositiveNumber);
  d->add_option("--epsilon", distill.epsilon, "Surface threshold")->check(CLI::Range(0.0, 1.0));
  d->add_option("--sigmas", distill.sigmas, "Smoothing widths (scene units)")->delimiter(',');
  d->add_option("--seed", distill.seed, "Seed for Monte-Carlo smoothing");
  d->add_flag("--monte-carlo", distill.monte_carlo, "Per-node sampling instead of exact convolution");
  d->add_option("--samples", distill.samples, "Samples per node with --monte-carlo")->check(CLI::PositiveNumber);

  RegisterArgs reg;
  auto* r = app.add_subcommand("register", "Estimate the transform taking scene A into scene B");
  r->add_option("scene_a", reg.scene_a, "Scene A directory")->required();
  r->add_option("scene_b", reg.scene_b, "Scene B directory")->required();
  r->add_option("--keypoints", reg.keypoints, "Keypoint file {a, b}; default: each scene's keypoints.json");
  r->add_option("--config", reg.config, "JSON file of configuration overrides");
  r->add_option("--set", reg.overrides, "key=value override, repeatable")->take_all();
  r->add_option("--restarts", reg.restarts, "Seeded restarts, best final loss wins")->check(CLI::PositiveNumber);
  r->add_option("--resolution", reg.resolution, "Grid nodes per axis")->check(CLI::Range(2, 1024));
  r->add_option("--seed", reg.seed, "Base seed");
  r->add_option("--trace", reg.trace, "Line-delimited JSON trace output");
  r->add_option("--out", reg.out, "Result JSON output");

  RenderArgs rend;
  auto* v = app.add_subcommand("render", "Render one view to PNG");
  v->add_option("scene", rend.scene, "Scene directory")->required();
  v->add_option("--view", rend.view, "Camera index");
  v->add_option("--width", rend.width, "Output width in pixels (0 = native)");
  v->add_option("--out", rend.out, "PNG path");
  v->add_option("--depth", rend.depth, "Optional depth PFM path");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Pose error and 3D-ADD of a predicted transform");
  e->add_option("--pred", ev.pred, "Predicted transform JSON")->required();
  e->add_option("--gt", ev.gt, "Ground-truth transform JSON")->required();
  e->add_option("--scene", ev.scene, "Analytic scene providing surface vertices");
  e->add_option("--vertices", ev.vertices, "Whitespace-separated x y z vertex file");
  e->add_option("--object", ev.object, "Row label");
  e->add_option("--out", ev.out, "JSON report path");
  e->add_option("--samples", ev.samples, "Surface vertices drawn from --scene");

  PointCloudArgs pc;
  auto* p = app.add_subcommand("export-pointcloud", "Back-project expected depth of every view");
  p->add_option("scene", pc.scene, "Scene directory")->required();
  p->add_option("--width", pc.width, "Render width per view (0 = native)");
  p->add_option("--out", pc.out, "Output .xyz path");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "HTTP service for annotation and registration jobs");
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (0 = any free port)");
  s->add_option("--scenes", serve.scenes, "Scenes root (default: $FIELDREG_SCENES or .)");
  s->add_option("--restarts", serve.restarts, "Restarts per job");
  s->add_option("--resolution", serve.resolution, "Grid nodes per axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitInput;
  }

  if (*d) return run_distill(distill);
  if (*r) return run_register(reg);
  if (*v) return run_render(rend);
  if (*e) return run_eval(ev);
  if (*p) return run_export(pc);
  if (*s) return run_serve(serve);
  return kExitFailure;
}
