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

#include "fieldreg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "fieldreg/image_io.hpp"

namespace fieldreg {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw grids are little-endian");

[[noreturn]] void malformed(const std::string& what) { fail(ErrorCode::kMalformedManifest, what); }

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(what + ": " + e.what());
  }
}

std::string read_text(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

Vec3 vec3_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) malformed(std::string(what) + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json json_of(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Mat4 mat4_of(const json& j) {
  Mat4 m;
  if (j.is_array() && j.size() == 16) {
    for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = j[i].get<double>();
  } else if (j.is_array() && j.size() == 4) {
    for (int r = 0; r < 4; ++r) {
      if (!j[r].is_array() || j[r].size() != 4) malformed("4x4 matrix rows must have 4 entries");
      for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
    }
  } else {
    malformed("expected a 4x4 matrix (16 numbers, row-major)");
  }
  return m;
}

json json_of(const Mat4& m) {
  json out = json::array();
  for (int r = 0; r < 4; ++r) out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  return out;
}

json flat_json_of(const Mat4& m) {
  json out = json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out.push_back(m(r, c));
  }
  return out;
}

RigidTransform transform_of(const json& j) {
  try {
    return RigidTransform::from_matrix(mat4_of(j));
  } catch (const Error& e) {
    malformed(std::string("bad rigid transform: ") + e.what());
  }
}

AnalyticShape shape_of(const json& j) {
  if (!j.is_object() || !j.contains("type")) malformed("primitive needs a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  const Vec3 color = j.contains("color") ? vec3_of(j["color"], "color") : Vec3::Ones();
  if (type == "sphere") {
    return AnalyticShape::sphere(vec3_of(j.at("center"), "center"), j.at("radius").get<double>(),
                                 j.at("density").get<double>(), color);
  }
  if (type == "box") {
    return AnalyticShape::box(vec3_of(j.at("center"), "center"), vec3_of(j.at("half_extents"), "half_extents"),
                              j.at("density").get<double>(), color);
  }
  if (type == "capsule") {
    return AnalyticShape::capsule(vec3_of(j.at("a"), "a"), vec3_of(j.at("b"), "b"),
                                  j.at("radius").get<double>(), j.at("density").get<double>(), color);
  }
  if (type == "union") {
    std::vector<AnalyticShape> children;
    for (const json& c : j.at("children")) children.push_back(shape_of(c));
    return AnalyticShape::make_union(std::move(children));
  }
  if (type == "instance") {
    return AnalyticShape::instance(transform_of(j.at("pose")), shape_of(j.at("child")));
  }
  malformed("unknown primitive type \"" + type + "\"");
}

json json_of(const AnalyticShape& s) {
  json j;
  switch (s.kind()) {
    case AnalyticShape::Kind::kSphere:
      j = {{"type", "sphere"}, {"center", json_of(s.center())}, {"radius", s.radius()}};
      break;
    case AnalyticShape::Kind::kBox:
      j = {{"type", "box"}, {"center", json_of(s.center())}, {"half_extents", json_of(s.half_extents())}};
      break;
    case AnalyticShape::Kind::kCapsule:
      j = {{"type", "capsule"}, {"a", json_of(s.center())}, {"b", json_of(s.endpoint())}, {"radius", s.radius()}};
      break;
    case AnalyticShape::Kind::kUnion: {
      json children = json::array();
      for (const AnalyticShape& c : s.children()) children.push_back(json_of(c));
      return {{"type", "union"}, {"children", children}};
    }
    case AnalyticShape::Kind::kInstance:
      return {{"type", "instance"}, {"pose", flat_json_of(s.pose().matrix())}, {"child", json_of(s.children().at(0))}};
  }
  j["density"] = s.leaf_density();
  j["color"] = json_of(s.color());
  return j;
}

PinholeCamera camera_of(const json& j) {
  PinholeCamera c;
  c.world_from_camera = transform_of(j.at("pose"));
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  if (c.width < 1 || c.height < 1 || !(c.fx > 0.0) || !(c.fy > 0.0)) malformed("bad camera intrinsics");
  return c;
}

json json_of(const PinholeCamera& c) {
  return {{"pose", flat_json_of(c.world_from_camera.matrix())},
          {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
          {"width", c.width}, {"height", c.height}};
}

json grid_header(const Grid3& g) {
  return {{"res_x", g.res[0]}, {"res_y", g.res[1]}, {"res_z", g.res[2]},
          {"origin", json_of(g.origin)}, {"spacing", json_of(g.spacing)}};
}

Grid3 grid_from_header(const json& j) {
  const std::array<int, 3> res = {j.at("res_x").get<int>(), j.at("res_y").get<int>(), j.at("res_z").get<int>()};
  Vec3 spacing;
  if (j.at("spacing").is_number()) {
    spacing = Vec3::Constant(j["spacing"].get<double>());
  } else {
    spacing = vec3_of(j["spacing"], "spacing");
  }
  try {
    return Grid3(res, vec3_of(j.at("origin"), "origin"), spacing);
  } catch (const Error& e) {
    malformed(std::string("bad grid header: ") + e.what());
  }
}

}  // namespace

std::vector<float> read_raw_floats(const fs::path& path, std::size_t expected_count) {
  if (!fs::exists(path)) malformed("missing " + path.string());
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() != expected_count * sizeof(float)) {
    malformed(path.string() + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
              std::to_string(expected_count * sizeof(float)));
  }
  std::vector<float> values(expected_count);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

void write_raw_floats(const fs::path& path, const std::vector<float>& values) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(values.data()),
                                                         values.size() * sizeof(float)));
}

DensityScene load_scene(const fs::path& dir) {
  const fs::path manifest = dir / "scene.json";
  if (!fs::exists(manifest)) malformed("missing " + manifest.string());
  const json j = parse_json(read_text(manifest), manifest.string());
  try {
    const double radius = j.at("radius").get<double>();
    std::vector<PinholeCamera> cameras;
    if (j.contains("cameras")) {
      for (const json& c : j["cameras"]) cameras.push_back(camera_of(c));
    }
    if (j.contains("analytic")) {
      const bool emission = j.value("emission", true);
      return DensityScene(shape_of(j["analytic"]), radius, std::move(cameras), emission);
    }
    if (!j.contains("grid")) malformed(manifest.string() + " needs \"grid\" or \"analytic\"");
    VoxelDensity voxels;
    voxels.density = grid_from_header(j["grid"]);
    voxels.density.values = read_raw_floats(dir / "density.raw", voxels.density.size());
    if (fs::exists(dir / "rgb.raw")) {
      const std::vector<float> rgb = read_raw_floats(dir / "rgb.raw", 3 * voxels.density.size());
      std::array<Grid3, 3> channels = {voxels.density, voxels.density, voxels.density};
      for (std::size_t i = 0; i < voxels.density.size(); ++i) {
        for (int c = 0; c < 3; ++c) channels[c].values[i] = rgb[3 * i + c];
      }
      voxels.rgb = std::move(channels);
    }
    return DensityScene(std::move(voxels), radius, std::move(cameras));
  } catch (const json::exception& e) {
    malformed(manifest.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) malformed(manifest.string() + ": " + e.what());
    throw;
  }
}

std::string scene_to_json(const DensityScene& scene) {
  json j;
  j["radius"] = scene.radius();
  json cams = json::array();
  for (const PinholeCamera& c : scene.cameras()) cams.push_back(json_of(c));
  j["cameras"] = cams;
  if (const AnalyticShape* shape = scene.analytic()) {
    j["analytic"] = json_of(*shape);
    j["emission"] = scene.has_emission();
  } else {
    j["grid"] = grid_header(scene.voxels()->density);
  }
  return j.dump(2);
}

void save_scene(const fs::path& dir, const DensityScene& scene) {
  fs::create_directories(dir);
  if (const VoxelDensity* v = scene.voxels()) {
    write_raw_floats(dir / "density.raw", v->density.values);
    if (v->rgb) {
      std::vector<float> rgb(3 * v->density.size());
      for (std::size_t i = 0; i < v->density.size(); ++i) {
        for (int c = 0; c < 3; ++c) rgb[3 * i + c] = (*v->rgb)[c].values[i];
      }
      write_raw_floats(dir / "rgb.raw", rgb);
    }
  }
  write_file_atomic(dir / "scene.json", scene_to_json(scene));
}

const char* to_string(FieldSource source) {
  switch (source) {
    case FieldSource::kSurface: return "surface";
    case FieldSource::kDensity: return "density";
    case FieldSource::kRadiance: return "radiance";
  }
  return "surface";
}

void save_distilled(const fs::path& dir, const DistilledFields& fields) {
  fs::create_directories(dir);
  json j;
  j["source"] = to_string(fields.source);
  j["epsilon"] = fields.epsilon;
  j["delta"] = fields.delta;
  j["resolution"] = fields.resolution;
  j["method"] = fields.method;
  j["samples"] = fields.samples;
  j["seed"] = fields.seed;
  j["grid"] = grid_header(fields.base);
  write_raw_floats(dir / "base.raw", fields.base.values);
  json levels = json::array();
  for (std::size_t i = 0; i < fields.levels.size(); ++i) {
    const Grid3* g = fields.levels[i].grid();
    if (g == nullptr) fail(ErrorCode::kInvalidArgument, "only grid-backed fields can be saved");
    const std::string name = "smoothed_" + std::to_string(i) + ".raw";
    write_raw_floats(dir / name, g->values);
    levels.push_back({{"sigma", fields.levels[i].sigma()}, {"file", name}});
  }
  j["levels"] = levels;
  write_file_atomic(dir / "manifest.json", j.dump(2));
}

std::optional<DistilledFields> load_distilled(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) return std::nullopt;
  const json j = parse_json(read_text(manifest), manifest.string());
  try {
    DistilledFields out;
    const std::string source = j.at("source").get<std::string>();
    out.source = source == "density" ? FieldSource::kDensity
                 : source == "radiance" ? FieldSource::kRadiance
                                        : FieldSource::kSurface;
    out.epsilon = j.at("epsilon").get<double>();
    out.delta = j.at("delta").get<double>();
    out.resolution = j.at("resolution").get<int>();
    out.method = j.at("method").get<std::string>();
    out.samples = j.at("samples").get<int>();
    out.seed = j.at("seed").get<std::uint64_t>();
    out.base = grid_from_header(j.at("grid"));
    out.base.values = read_raw_floats(dir / "base.raw", out.base.size());
    for (const json& level : j.at("levels")) {
      Grid3 g = out.base;
      g.values = read_raw_floats(dir / level.at("file").get<std::string>(), g.size());
      out.levels.emplace_back(level.at("sigma").get<double>(), std::move(g));
    }
    return out;
  } catch (const json::exception& e) {
    malformed(manifest.string() + ": " + e.what());
  }
}

KeypointDoc parse_keypoint_doc(const std::string& text) {
  const json j = parse_json(text, "keypoint document");
  KeypointDoc doc;
  try {
    if (j.contains("points")) {
      for (const json& p : j["points"]) doc.points.push_back(vec3_of(p, "keypoint"));
    } else if (j.contains("keypoints")) {
      for (const json& kp : j["keypoints"]) {
        std::vector<Click> clicks;
        for (const json& c : kp) {
          clicks.push_back({c.at("view").get<int>(), c.at("u").get<double>(), c.at("v").get<double>()});
        }
        doc.clicks.push_back(std::move(clicks));
      }
    } else {
      malformed("keypoint document needs \"keypoints\" or \"points\"");
    }
  } catch (const json::exception& e) {
    malformed(std::string("keypoint document: ") + e.what());
  }
  return doc;
}

std::string keypoint_doc_to_json(const KeypointDoc& doc) {
  json j;
  if (!doc.points.empty()) {
    json pts = json::array();
    for (const Vec3& p : doc.points) pts.push_back(json_of(p));
    j["points"] = pts;
  } else {
    json kps = json::array();
    for (const auto& clicks : doc.clicks) {
      json list = json::array();
      for (const Click& c : clicks) list.push_back({{"view", c.view}, {"u", c.u}, {"v", c.v}});
      kps.push_back(list);
    }
    j["keypoints"] = kps;
  }
  return j.dump(2);
}

KeypointFile parse_keypoint_file(const std::string& text) {
  const json j = parse_json(text, "keypoint file");
  if (!j.contains("a") || !j.contains("b")) malformed("keypoint file needs \"a\" and \"b\"");
  KeypointFile f;
  f.a = parse_keypoint_doc(j["a"].dump());
  f.b = parse_keypoint_doc(j["b"].dump());
  if (f.a.size() != f.b.size()) {
    fail(ErrorCode::kKeypointMismatch, "keypoint counts differ (" + std::to_string(f.a.size()) + " vs " +
                                           std::to_string(f.b.size()) + ")");
  }
  return f;
}

KeypointFile load_keypoint_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kIo, "missing keypoint file " + path.string());
  return parse_keypoint_file(read_text(path));
}

std::vector<Vec3> resolve_keypoints(const KeypointDoc& doc, const DensityScene& scene) {
  if (!doc.points.empty()) return doc.points;
  return triangulate_keypoints(doc.clicks, scene.cameras());
}

std::string transform_to_json(const RigidTransform& T) {
  return json{{"transform", json_of(T.matrix())}}.dump(2);
}

RigidTransform parse_transform(const std::string& text) {
  const json j = parse_json(text, "transform");
  return transform_of(j.is_object() ? j.at("transform") : j);
}

namespace {

using Setter = std::function<void(RegistrationConfig&, const json&)>;

template <typename T, typename Field>
Setter field_setter(Field field) {
  return [field](RegistrationConfig& c, const json& v) { c.*field = v.get<T>(); };
}

const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = {
      {"total_steps", field_setter<int>(&RegistrationConfig::total_steps)},
      {"warmup_steps", field_setter<int>(&RegistrationConfig::warmup_steps)},
      {"lr_rotation", field_setter<double>(&RegistrationConfig::lr_rotation)},
      {"lr_translation", field_setter<double>(&RegistrationConfig::lr_translation)},
      {"lr_kernel", field_setter<double>(&RegistrationConfig::lr_kernel)},
      {"sampler_interval", field_setter<int>(&RegistrationConfig::sampler_interval)},
      {"sigma_start_ratio", field_setter<double>(&RegistrationConfig::sigma_start_ratio)},
      {"sigma_end_ratio", field_setter<double>(&RegistrationConfig::sigma_end_ratio)},
      {"sigma_levels", field_setter<int>(&RegistrationConfig::sigma_levels)},
      {"kernel_c", field_setter<double>(&RegistrationConfig::kernel_c)},
      {"kernel_alpha", field_setter<double>(&RegistrationConfig::kernel_alpha)},
      {"alpha_min", field_setter<double>(&RegistrationConfig::alpha_min)},
      {"alpha_max", field_setter<double>(&RegistrationConfig::alpha_max)},
      {"c_min", field_setter<double>(&RegistrationConfig::c_min)},
      {"c_max", field_setter<double>(&RegistrationConfig::c_max)},
      {"rho_ratio", field_setter<double>(&RegistrationConfig::rho_ratio)},
      {"max_samples", field_setter<std::size_t>(&RegistrationConfig::max_samples)},
      {"uniform_samples", field_setter<std::size_t>(&RegistrationConfig::uniform_samples)},
      {"seed", field_setter<std::uint64_t>(&RegistrationConfig::seed)},
      {"lambda_override",
       [](RegistrationConfig& c, const json& v) {
         if (v.is_null()) {
           c.lambda_override.reset();
         } else {
           c.lambda_override = v.get<double>();
         }
       }},
      {"initial_pose",
       [](RegistrationConfig& c, const json& v) {
         if (!v.is_array() || v.size() != 6) malformed("initial_pose needs 6 numbers");
         for (int i = 0; i < 3; ++i) {
           c.initial_pose.axis_angle[i] = v[i].get<double>();
           c.initial_pose.translation[i] = v[3 + i].get<double>();
         }
       }},
      {"ablation.no_lambda_annealing",
       [](RegistrationConfig& c, const json& v) { c.ablation.no_lambda_annealing = v.get<bool>(); }},
      {"ablation.fixed_sigma", [](RegistrationConfig& c, const json& v) { c.ablation.fixed_sigma = v.get<bool>(); }},
      {"ablation.uniform_sampling",
       [](RegistrationConfig& c, const json& v) { c.ablation.uniform_sampling = v.get<bool>(); }},
      {"ablation.density_residual",
       [](RegistrationConfig& c, const json& v) { c.ablation.density_residual = v.get<bool>(); }},
      {"ablation.radiance_residual",
       [](RegistrationConfig& c, const json& v) { c.ablation.radiance_residual = v.get<bool>(); }},
  };
  return setters;
}

void apply_config_value(RegistrationConfig& config, const std::string& key, const json& value) {
  if (key == "profile") {
    const std::string name = value.get<std::string>();
    if (name == "partial_object") {
      config = RegistrationConfig::partial_object();
    } else if (name == "default") {
      config = RegistrationConfig{};
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown profile \"" + name + "\"");
    }
    return;
  }
  const auto& setters = config_setters();
  const auto it = setters.find(key);
  if (it == setters.end()) fail(ErrorCode::kInvalidArgument, "unknown config key \"" + key + "\"");
  try {
    it->second(config, value);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, "bad value for \"" + key + "\": " + e.what());
  }
}

void apply_flattened(RegistrationConfig& config, const json& j, const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      apply_flattened(config, value, full);
    } else {
      apply_config_value(config, full, value);
    }
  }
}

}  // namespace

void apply_config_json(RegistrationConfig& config, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kInvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "config must be a JSON object");
  // The profile resets the base, so it goes first.
  if (j.contains("profile")) apply_config_value(config, "profile", j["profile"]);
  j.erase("profile");
  apply_flattened(config, j, "");
}

void apply_config_override(RegistrationConfig& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCode::kInvalidArgument, "override must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  apply_config_value(config, key, value);
}

std::string config_to_json(const RegistrationConfig& c) {
  json j = {{"total_steps", c.total_steps},
            {"warmup_steps", c.warmup_steps},
            {"lr_rotation", c.lr_rotation},
            {"lr_translation", c.lr_translation},
            {"lr_kernel", c.lr_kernel},
            {"sampler_interval", c.sampler_interval},
            {"sigma_start_ratio", c.sigma_start_ratio},
            {"sigma_end_ratio", c.sigma_end_ratio},
            {"sigma_levels", c.sigma_levels},
            {"kernel_c", c.kernel_c},
            {"kernel_alpha", c.kernel_alpha},
            {"alpha_min", c.alpha_min},
            {"alpha_max", c.alpha_max},
            {"c_min", c.c_min},
            {"c_max", c.c_max},
            {"rho_ratio", c.rho_ratio},
            {"max_samples", c.max_samples},
            {"uniform_samples", c.uniform_samples},
            {"seed", c.seed},
            {"lambda_override", c.lambda_override ? json(*c.lambda_override) : json(nullptr)},
            {"initial_pose", json::array({c.initial_pose.axis_angle.x(), c.initial_pose.axis_angle.y(),
                                          c.initial_pose.axis_angle.z(), c.initial_pose.translation.x(),
                                          c.initial_pose.translation.y(), c.initial_pose.translation.z()})},
            {"ablation",
             {{"no_lambda_annealing", c.ablation.no_lambda_annealing},
              {"fixed_sigma", c.ablation.fixed_sigma},
              {"uniform_sampling", c.ablation.uniform_sampling},
              {"density_residual", c.ablation.density_residual},
              {"radiance_residual", c.ablation.radiance_residual}}}};
  return j.dump(2);
}

std::string trace_record_json(const TraceRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j = {{"restart", r.restart},
            {"phase", r.phase},
            {"step", r.step},
            {"lambda", num(r.lambda)},
            {"sigma", num(r.sigma)},
            {"loss_total", num(r.loss_total)},
            {"loss_match", num(r.loss_match)},
            {"loss_key", num(r.loss_key)},
            {"objective", num(r.objective)},
            {"pose", json::array({num(r.pose.axis_angle.x()), num(r.pose.axis_angle.y()),
                                  num(r.pose.axis_angle.z()), num(r.pose.translation.x()),
                                  num(r.pose.translation.y()), num(r.pose.translation.z())})},
            {"n_samples", r.n_samples},
            {"c", num(r.c)},
            {"alpha", num(r.alpha)}};
  if (r.sample_cap_hit) j["sample_cap_hit"] = true;
  return j.dump();
}

}  // namespace fieldreg
