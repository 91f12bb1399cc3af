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

#include "fieldreg/fieldreg.h"

#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>

#include "fieldreg/eval.hpp"
#include "fieldreg/image_io.hpp"
#include "fieldreg/pipeline.hpp"
#include "fieldreg/service.hpp"

#include <json.hpp>

struct fr_scene {
  fieldreg::DensityScene scene;
};

struct fr_service {
  std::unique_ptr<fieldreg::Service> service;
};

namespace {

using fieldreg::ErrorCode;
using nlohmann::json;

thread_local std::string g_last_error;

template <typename F>
fr_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return FR_OK;
  } catch (const fieldreg::Error& e) {
    g_last_error = e.what();
    return static_cast<fr_status>(static_cast<int>(e.code()));
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return FR_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) fieldreg::fail(ErrorCode::kInvalidArgument, what);
}

fieldreg::RigidTransform transform_from(const double m[16]) {
  fieldreg::Mat4 M;
  for (int i = 0; i < 16; ++i) M(i / 4, i % 4) = m[i];
  return fieldreg::RigidTransform::from_matrix(M);
}

void transform_to(const fieldreg::RigidTransform& T, double m[16]) {
  const fieldreg::Mat4 M = T.matrix();
  for (int i = 0; i < 16; ++i) m[i] = M(i / 4, i % 4);
}

std::string read_text(const std::string& path) {
  const std::vector<std::uint8_t> bytes = fieldreg::read_file(path);
  return {bytes.begin(), bytes.end()};
}

fieldreg::KeypointFile keypoints_for(const char* path, const fieldreg::fs::path& a, const fieldreg::fs::path& b) {
  if (path != nullptr) return fieldreg::load_keypoint_file(path);
  fieldreg::KeypointFile file;
  for (const auto* dir : {&a, &b}) {
    const fieldreg::fs::path p = *dir / "keypoints.json";
    if (!fieldreg::fs::exists(p)) fieldreg::fail(ErrorCode::kIo, "missing " + p.string());
  }
  file.a = fieldreg::parse_keypoint_doc(read_text(a / "keypoints.json"));
  file.b = fieldreg::parse_keypoint_doc(read_text(b / "keypoints.json"));
  return file;
}

}  // namespace

extern "C" {

const char* fr_version(void) { return "0.1.0"; }

const char* fr_status_string(fr_status status) {
  if (status == FR_OK) return "Ok";
  if (status == FR_ERR_INTERNAL) return "Internal";
  if (status >= FR_ERR_INVALID_ARGUMENT && status <= FR_ERR_CONFLICT) {
    return fieldreg::to_string(static_cast<ErrorCode>(static_cast<int>(status)));
  }
  return "Unknown";
}

const char* fr_last_error_message(void) { return g_last_error.c_str(); }

fr_status fr_scene_open(const char* dir, fr_scene** out) {
  return guarded([&] {
    require(dir != nullptr && out != nullptr, "fr_scene_open: null argument");
    *out = nullptr;
    *out = new fr_scene{fieldreg::load_scene(dir)};
  });
}

void fr_scene_close(fr_scene* scene) { delete scene; }

fr_status fr_scene_get_info(const fr_scene* scene, fr_scene_info* out) {
  return guarded([&] {
    require(scene != nullptr && out != nullptr, "fr_scene_get_info: null argument");
    out->radius = scene->scene.radius();
    out->num_views = static_cast<int>(scene->scene.cameras().size());
    out->analytic = scene->scene.analytic() != nullptr;
    out->has_emission = scene->scene.has_emission();
  });
}

fr_status fr_scene_render(const fr_scene* scene, int view, int width, const char* png_path,
                          const char* depth_pfm_path) {
  return guarded([&] {
    require(scene != nullptr && png_path != nullptr, "fr_scene_render: null argument");
    const auto& cams = scene->scene.cameras();
    if (view < 0 || static_cast<std::size_t>(view) >= cams.size()) {
      fieldreg::fail(ErrorCode::kOutOfRange, "view " + std::to_string(view) + " out of range (scene has " +
                                                 std::to_string(cams.size()) + ")");
    }
    const fieldreg::PinholeCamera cam = width > 0 ? cams[view].resized(width) : cams[view];
    const fieldreg::RenderedView image = fieldreg::render(scene->scene, cam);
    fieldreg::write_file_atomic(png_path, fieldreg::encode_png(image.width, image.height, fieldreg::to_rgb8(image)));
    if (depth_pfm_path != nullptr) {
      fieldreg::write_file_atomic(depth_pfm_path, fieldreg::encode_pfm(image.width, image.height, image.depth));
    }
  });
}

fr_status fr_scene_export_point_cloud(const fr_scene* scene, int width, const char* out_path, size_t* count) {
  return guarded([&] {
    require(scene != nullptr && out_path != nullptr, "fr_scene_export_point_cloud: null argument");
    fieldreg::PointCloudOptions opts;
    opts.width = std::max(width, 0);
    const std::vector<fieldreg::Vec3> pts = fieldreg::export_point_cloud(scene->scene, opts);
    std::ostringstream os;
    os << std::setprecision(9);
    for (const auto& p : pts) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    fieldreg::write_file_atomic(out_path, os.str());
    if (count) *count = pts.size();
  });
}

fr_status fr_scene_sample_surface(const fr_scene* scene, size_t capacity, uint64_t seed, double* xyz_out,
                                  size_t* written) {
  return guarded([&] {
    require(scene != nullptr && xyz_out != nullptr && written != nullptr, "fr_scene_sample_surface: null argument");
    const fieldreg::AnalyticShape* shape = scene->scene.analytic();
    require(shape != nullptr, "surface sampling needs an analytic scene");
    const std::vector<fieldreg::Vec3> pts = shape->sample_surface(capacity, seed);
    const std::size_t n = std::min(capacity, pts.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) xyz_out[3 * i + c] = pts[i][c];
    }
    *written = n;
  });
}

void fr_distill_options_default(fr_distill_options* options) {
  if (options == nullptr) return;
  options->resolution = 128;
  options->delta = 0.05;
  options->epsilon = 0.5;
  options->sigmas = nullptr;
  options->num_sigmas = 0;
  options->monte_carlo = 0;
  options->samples = 64;
  options->seed = 0;
}

fr_status fr_distill(const char* scene_dir, const fr_distill_options* options) {
  return guarded([&] {
    require(scene_dir != nullptr && options != nullptr, "fr_distill: null argument");
    require(options->num_sigmas == 0 || options->sigmas != nullptr, "fr_distill: sigmas missing");
    const fieldreg::DensityScene scene = fieldreg::load_scene(scene_dir);
    fieldreg::DistillRequest req;
    req.resolution = options->resolution;
    req.delta = options->delta;
    req.epsilon = options->epsilon;
    if (options->num_sigmas > 0) req.sigmas.assign(options->sigmas, options->sigmas + options->num_sigmas);
    req.options.method = options->monte_carlo ? fieldreg::DistillOptions::Method::kMonteCarlo
                                              : fieldreg::DistillOptions::Method::kConvolution;
    req.options.samples = options->samples;
    req.options.seed = options->seed;
    fieldreg::load_or_distill(scene_dir, scene, req);
  });
}

void fr_register_options_default(fr_register_options* options) {
  if (options == nullptr) return;
  options->keypoints_path = nullptr;
  options->config_json = nullptr;
  options->overrides = nullptr;
  options->num_overrides = 0;
  options->restarts = 10;
  options->resolution = 128;
  options->trace_path = nullptr;
  options->result_path = nullptr;
}

fr_status fr_register(const char* scene_a_dir, const char* scene_b_dir, const fr_register_options* options,
                      double transform_out[16], int* chosen_restart) {
  return guarded([&] {
    require(scene_a_dir != nullptr && scene_b_dir != nullptr && options != nullptr,
            "fr_register: null argument");
    fieldreg::PairRequest req;
    req.scene_a = scene_a_dir;
    req.scene_b = scene_b_dir;
    req.restarts = options->restarts;
    req.resolution = options->resolution;
    if (options->config_json != nullptr) fieldreg::apply_config_json(req.config, options->config_json);
    for (size_t i = 0; i < options->num_overrides; ++i) {
      fieldreg::apply_config_override(req.config, options->overrides[i]);
    }
    req.keypoints = keypoints_for(options->keypoints_path, req.scene_a, req.scene_b);

    std::unique_ptr<std::ofstream> trace;
    std::string trace_tmp;
    if (options->trace_path != nullptr) {
      trace_tmp = std::string(options->trace_path) + ".tmp";
      trace = std::make_unique<std::ofstream>(trace_tmp, std::ios::trunc);
      if (!*trace) fieldreg::fail(ErrorCode::kIo, "cannot open " + trace_tmp);
    }
    auto write_records = [&](const std::vector<fieldreg::TraceRecord>& records) {
      if (!trace) return;
      for (const auto& r : records) *trace << fieldreg::trace_record_json(r) << '\n';
    };

    fieldreg::PairResult result;
    try {
      result = fieldreg::register_scene_pair(req);
    } catch (const fieldreg::NonFiniteLossError& e) {
      write_records(e.trace());
      if (trace) {
        trace->close();
        fieldreg::fs::rename(trace_tmp, options->trace_path);
      }
      throw;
    }
    const auto& reg = result.registration;
    for (const auto& t : reg.traces) write_records(t);
    if (trace) {
      trace->close();
      if (!*trace) fieldreg::fail(ErrorCode::kIo, "failed writing " + trace_tmp);
      fieldreg::fs::rename(trace_tmp, options->trace_path);
    }
    if (options->result_path != nullptr) {
      json summaries = json::array();
      for (std::size_t i = 0; i < reg.final_losses.size(); ++i) {
        json s = {{"restart", i},
                  {"status", reg.final_losses[i] ? "ok" : "non_finite"},
                  {"final_loss", reg.final_losses[i] ? json(*reg.final_losses[i]) : json(nullptr)},
                  {"records", reg.traces[i].size()}};
        if (!reg.traces[i].empty()) s["last"] = json::parse(fieldreg::trace_record_json(reg.traces[i].back()));
        summaries.push_back(s);
      }
      const fieldreg::Mat4 M = reg.best.transform.matrix();
      json matrix = json::array();
      for (int r = 0; r < 4; ++r) matrix.push_back({M(r, 0), M(r, 1), M(r, 2), M(r, 3)});
      json sigmas = result.sigmas.levels;
      json out = {{"transform", matrix},
                  {"chosen_restart", reg.chosen_restart},
                  {"restart_traces", summaries},
                  {"sigma_levels", sigmas},
                  {"samples", reg.best.samples.size()},
                  {"config", json::parse(fieldreg::config_to_json(req.config))}};
      if (options->trace_path != nullptr) out["trace_file"] = options->trace_path;
      fieldreg::write_file_atomic(options->result_path, out.dump(2));
    }
    if (transform_out) transform_to(reg.best.transform, transform_out);
    if (chosen_restart) *chosen_restart = reg.chosen_restart;
  });
}

fr_status fr_pose_error(const double pred[16], const double gt[16], double* delta_t, double* delta_R,
                        int* gimbal_warning) {
  return guarded([&] {
    require(pred != nullptr && gt != nullptr && delta_t != nullptr && delta_R != nullptr,
            "fr_pose_error: null argument");
    const fieldreg::PoseError e = fieldreg::pose_error(transform_from(pred), transform_from(gt));
    *delta_t = e.delta_t;
    *delta_R = e.delta_R;
    if (gimbal_warning) *gimbal_warning = e.gimbal_warning;
  });
}

fr_status fr_add3d(const double* vertices, size_t count, const double pred[16], const double gt[16], double* out) {
  return guarded([&] {
    require(pred != nullptr && gt != nullptr && out != nullptr, "fr_add3d: null argument");
    require(count == 0 || vertices != nullptr, "fr_add3d: vertices missing");
    std::vector<fieldreg::Vec3> v(count);
    for (size_t i = 0; i < count; ++i) v[i] = {vertices[3 * i], vertices[3 * i + 1], vertices[3 * i + 2]};
    *out = fieldreg::add3d(v, transform_from(pred), transform_from(gt));
  });
}

fr_status fr_service_start(const char* host, int port, const char* scenes_root, int restarts, int resolution,
                           fr_service** out) {
  return guarded([&] {
    require(scenes_root != nullptr && out != nullptr, "fr_service_start: null argument");
    *out = nullptr;
    fieldreg::ServiceOptions opts;
    if (host != nullptr) opts.host = host;
    opts.port = port;
    opts.scenes_root = scenes_root;
    if (restarts > 0) opts.default_restarts = restarts;
    if (resolution > 1) opts.default_resolution = resolution;
    auto handle = std::make_unique<fr_service>();
    handle->service = std::make_unique<fieldreg::Service>(opts);
    handle->service->start();
    *out = handle.release();
  });
}

int fr_service_port(const fr_service* service) { return service ? service->service->port() : -1; }

void fr_service_wait(fr_service* service) {
  if (service) service->service->wait();
}

void fr_service_stop(fr_service* service) {
  if (service) service->service->stop();
}

void fr_service_destroy(fr_service* service) { delete service; }

}  // extern "C"
