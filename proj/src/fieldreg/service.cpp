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

#include "fieldreg/service.hpp"

#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "fieldreg/image_io.hpp"
#include "fieldreg/pipeline.hpp"

// After Eigen: <resolv.h> defines a _res macro that collides with Eigen internals.
#include <httplib.h>
#include <json.hpp>

namespace fieldreg {

namespace {

using json = nlohmann::json;

constexpr std::size_t kSnapshotPoints = 2000;
constexpr int kSnapshotEvery = 200;

struct JobCancelled {};

struct JobSnapshot {
  std::string phase = "distilling";
  long step = 0;
  long total_steps = 0;
  int restart = 0;
  std::optional<TraceRecord> latest;
  std::optional<RigidTransform> transform;
  std::optional<int> chosen_restart;
  std::string error;
  std::vector<Vec3> samples;
};

struct Job {
  std::string id;
  std::string scene_a;
  std::string scene_b;
  std::string pair_key;
  std::mutex mutex;
  std::shared_ptr<const JobSnapshot> snapshot = std::make_shared<JobSnapshot>();
  std::atomic<bool> cancel{false};
  std::thread worker;

  std::shared_ptr<const JobSnapshot> read() {
    std::lock_guard lock(mutex);
    return snapshot;
  }
  void publish(std::shared_ptr<const JobSnapshot> next) {
    std::lock_guard lock(mutex);
    snapshot = std::move(next);
  }
};

json json_of(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json matrix_json(const RigidTransform& T) {
  const Mat4 m = T.matrix();
  json out = json::array();
  for (int r = 0; r < 4; ++r) out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  return out;
}

int phase_rank(const std::string& phase) {
  static const std::map<std::string, int> rank = {
      {"distilling", 0}, {"warmup", 1}, {"registering", 2}, {"done", 3}, {"failed", 3}};
  return rank.at(phase);
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

bool valid_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find('/') == std::string::npos &&
         id.find('\\') == std::string::npos;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::thread listener;
  int bound_port = -1;

  std::mutex scenes_mutex;
  std::map<std::string, std::shared_ptr<const DensityScene>> scenes;

  std::mutex jobs_mutex;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::set<std::string> busy_pairs;
  long next_job = 1;

  std::mutex stop_mutex;
  std::condition_variable stop_cv;
  bool stopped = false;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { routes(); }

  fs::path scene_dir(const std::string& id) const { return options.scenes_root / id; }

  bool scene_exists(const std::string& id) const {
    return valid_id(id) && fs::exists(scene_dir(id) / "scene.json");
  }

  std::shared_ptr<const DensityScene> scene(const std::string& id) {
    std::lock_guard lock(scenes_mutex);
    auto it = scenes.find(id);
    if (it != scenes.end()) return it->second;
    auto loaded = std::make_shared<const DensityScene>(load_scene(scene_dir(id)));
    scenes.emplace(id, loaded);
    return loaded;
  }

  std::vector<std::string> scene_ids() const {
    std::vector<std::string> ids;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(options.scenes_root, ec)) {
      if (entry.is_directory() && fs::exists(entry.path() / "scene.json")) {
        ids.push_back(entry.path().filename().string());
      }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  void routes() {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Get("/scenes", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"scenes", scene_ids()}});
    });

    server.Get(R"(/scenes/([^/]+)/views)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!scene_exists(id)) return send_error(res, 404, "unknown scene " + id);
      try {
        json views = json::array();
        const auto s = scene(id);
        for (std::size_t i = 0; i < s->cameras().size(); ++i) {
          const PinholeCamera& c = s->cameras()[i];
          views.push_back({{"view", i}, {"width", c.width}, {"height", c.height}, {"fx", c.fx},
                           {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
                           {"pose", matrix_json(c.world_from_camera)}});
        }
        send_json(res, 200, {{"scene", id}, {"views", views}});
      } catch (const Error& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Get(R"(/scenes/([^/]+)/render)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!scene_exists(id)) return send_error(res, 404, "unknown scene " + id);
      try {
        const auto s = scene(id);
        const int view = req.has_param("view") ? std::stoi(req.get_param_value("view")) : 0;
        if (view < 0 || static_cast<std::size_t>(view) >= s->cameras().size()) {
          return send_error(res, 404, "unknown view " + std::to_string(view));
        }
        PinholeCamera cam = s->cameras()[view];
        if (req.has_param("width")) {
          const int width = std::stoi(req.get_param_value("width"));
          if (width < 1 || width > 4096) return send_error(res, 400, "width out of range");
          cam = cam.resized(width);
        }
        const RenderedView image = render(*s, cam);
        const std::vector<std::uint8_t> png = encode_png(image.width, image.height, to_rgb8(image));
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      } catch (const std::invalid_argument&) {
        send_error(res, 400, "view and width must be integers");
      } catch (const std::out_of_range&) {
        send_error(res, 400, "view and width must be integers");
      } catch (const Error& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Post(R"(/scenes/([^/]+)/keypoints)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!scene_exists(id)) return send_error(res, 404, "unknown scene " + id);
      try {
        const KeypointDoc doc = parse_keypoint_doc(req.body);
        write_file_atomic(scene_dir(id) / "keypoints.json", keypoint_doc_to_json(doc));
        send_json(res, 200, {{"scene", id}, {"stored", doc.size()}});
      } catch (const Error& e) {
        send_error(res, e.code() == ErrorCode::kIo ? 500 : 400, e.what());
      }
    });

    server.Post("/triangulate", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("scene") || !body.contains("clicks")) {
        return send_error(res, 400, "body must be {scene, clicks}");
      }
      const std::string id = body["scene"].is_string() ? body["scene"].get<std::string>() : "";
      if (!scene_exists(id)) return send_error(res, 404, "unknown scene " + id);
      try {
        const auto s = scene(id);
        json clicks = body["clicks"];
        if (!clicks.is_array() || clicks.empty()) return send_error(res, 400, "clicks must be a non-empty list");
        // A flat click list describes a single keypoint.
        if (clicks[0].is_object()) clicks = json::array({clicks});
        json points = json::array();
        for (const json& kp : clicks) {
          std::vector<Ray> rays;
          for (const json& c : kp) {
            const int view = c.at("view").get<int>();
            if (view < 0 || static_cast<std::size_t>(view) >= s->cameras().size()) {
              return send_error(res, 400, "unknown view " + std::to_string(view));
            }
            rays.push_back(s->cameras()[view].ray_through(c.at("u").get<double>(), c.at("v").get<double>()));
          }
          if (rays.size() < 2) return send_error(res, 400, "each keypoint needs clicks in at least 2 views");
          points.push_back(json_of(triangulate_rays(rays)));
        }
        send_json(res, 200, {{"scene", id}, {"points", points}});
      } catch (const json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const Error& e) {
        send_error(res, 400, e.what());
      }
    });

    server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) { post_job(req, res); });

    server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      std::lock_guard lock(jobs_mutex);
      for (const auto& [id, job] : jobs) list.push_back({{"job_id", id}, {"phase", job->read()->phase}});
      send_json(res, 200, {{"jobs", list}});
    });

    server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_ptr<Job> job;
      {
        std::lock_guard lock(jobs_mutex);
        auto it = jobs.find(req.matches[1]);
        if (it == jobs.end()) return send_error(res, 404, "unknown job");
        job = it->second;
      }
      const auto snap = job->read();
      json j = {{"job_id", job->id}, {"scene_a", job->scene_a}, {"scene_b", job->scene_b},
                {"phase", snap->phase}, {"step", snap->step}, {"total_steps", snap->total_steps},
                {"restart", snap->restart}};
      if (snap->latest) j["latest"] = json::parse(trace_record_json(*snap->latest));
      if (snap->transform) j["transform"] = matrix_json(*snap->transform);
      if (snap->chosen_restart) j["chosen_restart"] = *snap->chosen_restart;
      if (!snap->error.empty()) j["error"] = snap->error;
      if (req.has_param("samples")) {
        json pts = json::array();
        for (const Vec3& p : snap->samples) pts.push_back(json_of(p));
        j["samples"] = pts;
      }
      send_json(res, 200, j);
    });
  }

  void post_job(const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
    if (!body.contains("scene_a") || !body.contains("scene_b") || !body["scene_a"].is_string() ||
        !body["scene_b"].is_string()) {
      return send_error(res, 400, "scene_a and scene_b are required");
    }
    const std::string a = body["scene_a"];
    const std::string b = body["scene_b"];
    for (const std::string& id : {a, b}) {
      if (!scene_exists(id)) return send_error(res, 404, "unknown scene " + id);
    }
    PairRequest request;
    request.scene_a = scene_dir(a);
    request.scene_b = scene_dir(b);
    request.restarts = options.default_restarts;
    request.resolution = options.default_resolution;
    try {
      if (body.contains("config")) apply_config_json(request.config, body["config"].dump());
      if (body.contains("restarts")) request.restarts = body["restarts"].get<int>();
      if (body.contains("resolution")) request.resolution = body["resolution"].get<int>();
      request.config.validate();
    } catch (const json::exception& e) {
      return send_error(res, 400, e.what());
    } catch (const Error& e) {
      return send_error(res, 400, e.what());
    }
    if (request.restarts < 1 || request.resolution < 2) return send_error(res, 400, "bad restarts/resolution");
    for (const std::string& id : {a, b}) {
      if (!fs::exists(scene_dir(id) / "keypoints.json")) {
        return send_error(res, 409, "scene " + id + " has no keypoints yet");
      }
    }
    try {
      const std::vector<std::uint8_t> ka = read_file(scene_dir(a) / "keypoints.json");
      const std::vector<std::uint8_t> kb = read_file(scene_dir(b) / "keypoints.json");
      request.keypoints.a = parse_keypoint_doc(std::string(ka.begin(), ka.end()));
      request.keypoints.b = parse_keypoint_doc(std::string(kb.begin(), kb.end()));
    } catch (const Error& e) {
      return send_error(res, 409, std::string("stored keypoints unusable: ") + e.what());
    }
    if (request.keypoints.a.size() != request.keypoints.b.size() || request.keypoints.a.size() < 3) {
      return send_error(res, 409, "scenes need equal keypoint counts, at least 3");
    }

    auto job = std::make_shared<Job>();
    job->scene_a = a;
    job->scene_b = b;
    job->pair_key = std::min(a, b) + "\n" + std::max(a, b);
    {
      std::lock_guard lock(jobs_mutex);
      if (stopped_flag()) return send_error(res, 503, "service is shutting down");
      if (busy_pairs.count(job->pair_key)) return send_error(res, 409, "a job for this scene pair is running");
      busy_pairs.insert(job->pair_key);
      job->id = "job-" + std::to_string(next_job++);
      jobs.emplace(job->id, job);
      job->worker = std::thread([this, job, request] { run_job(job, request); });
    }
    send_json(res, 202, {{"job_id", job->id}});
  }

  bool stopped_flag() {
    std::lock_guard lock(stop_mutex);
    return stopped;
  }

  void run_job(const std::shared_ptr<Job>& job, const PairRequest& request) {
    const long per_restart = request.config.warmup_steps + request.config.total_steps + 1;
    auto base = std::make_shared<JobSnapshot>();
    base->total_steps = per_restart * request.restarts;
    job->publish(base);
    int since_snapshot = kSnapshotEvery;
    std::vector<Vec3> samples;

    auto observer = [&](const TraceRecord& rec, const ActiveSampleSet& set) {
      if (job->cancel.load()) throw JobCancelled{};
      auto next = std::make_shared<JobSnapshot>(*job->read());
      const std::string phase = rec.phase == "warmup" ? "warmup" : "registering";
      if (phase_rank(phase) >= phase_rank(next->phase)) next->phase = phase;
      const long local = rec.phase == "warmup"        ? rec.step
                         : rec.phase == "registering" ? request.config.warmup_steps + rec.step
                                                      : per_restart - 1;
      next->step = std::max(next->step, rec.restart * per_restart + local);
      next->restart = rec.restart;
      next->latest = rec;
      if (++since_snapshot >= kSnapshotEvery || rec.phase == "final") {
        since_snapshot = 0;
        const auto& pts = set.points();
        const std::size_t stride = std::max<std::size_t>(1, pts.size() / kSnapshotPoints);
        samples.clear();
        for (std::size_t i = 0; i < pts.size(); i += stride) samples.push_back(pts[i]);
      }
      next->samples = samples;
      job->publish(std::move(next));
    };

    try {
      const PairResult result = register_scene_pair(request, observer);
      auto done = std::make_shared<JobSnapshot>(*job->read());
      done->phase = "done";
      done->step = done->total_steps;
      done->transform = result.registration.best.transform;
      done->chosen_restart = result.registration.chosen_restart;
      job->publish(std::move(done));
    } catch (const JobCancelled&) {
      fail_job(job, "cancelled");
    } catch (const std::exception& e) {
      fail_job(job, e.what());
    }
    std::lock_guard lock(jobs_mutex);
    busy_pairs.erase(job->pair_key);
  }

  static void fail_job(const std::shared_ptr<Job>& job, const std::string& message) {
    auto failed = std::make_shared<JobSnapshot>(*job->read());
    failed->phase = "failed";
    failed->error = message;
    job->publish(std::move(failed));
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
  if (impl_->listener.joinable()) fail(ErrorCode::kConflict, "service already started");
  if (!fs::is_directory(impl_->options.scenes_root)) {
    fail(ErrorCode::kIo, "scenes root " + impl_->options.scenes_root.string() + " is not a directory");
  }
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) fail(ErrorCode::kIo, "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  impl_->bound_port = port;
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

int Service::port() const { return impl_->bound_port; }

void Service::wait() {
  std::unique_lock lock(impl_->stop_mutex);
  impl_->stop_cv.wait(lock, [this] { return impl_->stopped; });
}

void Service::stop() {
  {
    std::lock_guard lock(impl_->stop_mutex);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  std::vector<std::shared_ptr<Job>> jobs;
  {
    std::lock_guard lock(impl_->jobs_mutex);
    for (auto& [id, job] : impl_->jobs) jobs.push_back(job);
  }
  for (auto& job : jobs) job->cancel = true;
  for (auto& job : jobs) {
    if (job->worker.joinable()) job->worker.join();
  }
  impl_->stop_cv.notify_all();
}

}  // namespace fieldreg
