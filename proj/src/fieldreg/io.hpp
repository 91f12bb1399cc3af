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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fieldreg/distill.hpp"
#include "fieldreg/fields.hpp"
#include "fieldreg/registration.hpp"
#include "fieldreg/scene.hpp"

namespace fieldreg {

namespace fs = std::filesystem;

/// Loads scene.json (+ density.raw / rgb.raw for grid scenes). Throws
/// MalformedManifest for missing or inconsistent content, Io for unreadable
/// files.
DensityScene load_scene(const fs::path& dir);
void save_scene(const fs::path& dir, const DensityScene& scene);
std::string scene_to_json(const DensityScene& scene);

std::vector<float> read_raw_floats(const fs::path& path, std::size_t expected_count);
void write_raw_floats(const fs::path& path, const std::vector<float>& values);

/// Which scalar field the smoothed levels were built from.
enum class FieldSource { kSurface, kDensity, kRadiance };
const char* to_string(FieldSource source);

struct DistilledFields {
  FieldSource source = FieldSource::kSurface;
  double epsilon = 0.5;
  double delta = 0.05;
  int resolution = 0;
  std::string method = "convolution";
  int samples = 0;
  std::uint64_t seed = 0;
  Grid3 base;  // thresholded surface field (or normalized density / luminance)
  std::vector<SmoothedField> levels;
};

/// Layout: <dir>/manifest.json, base.raw, smoothed_<i>.raw.
void save_distilled(const fs::path& dir, const DistilledFields& fields);
/// Empty when no manifest exists.
std::optional<DistilledFields> load_distilled(const fs::path& dir);

struct KeypointDoc {
  std::vector<std::vector<Click>> clicks;  // one click list per keypoint
  std::vector<Vec3> points;                // pre-triangulated alternative
  std::size_t size() const { return points.empty() ? clicks.size() : points.size(); }
};

struct KeypointFile {
  KeypointDoc a;
  KeypointDoc b;
};

/// {"keypoints": [[{"view", "u", "v"}, ...], ...]} or {"points": [[x, y, z], ...]}.
KeypointDoc parse_keypoint_doc(const std::string& text);
std::string keypoint_doc_to_json(const KeypointDoc& doc);
/// {"a": doc, "b": doc}.
KeypointFile parse_keypoint_file(const std::string& text);
KeypointFile load_keypoint_file(const fs::path& path);
std::vector<Vec3> resolve_keypoints(const KeypointDoc& doc, const DensityScene& scene);

std::string transform_to_json(const RigidTransform& T);
/// Accepts {"transform": 4x4 nested or 16 flat, row-major} or the bare matrix.
RigidTransform parse_transform(const std::string& text);

/// Applies a JSON object of overrides; nested objects map to dotted keys
/// ("ablation.uniform_sampling"). Throws InvalidArgument on unknown keys.
void apply_config_json(RegistrationConfig& config, const std::string& text);
/// key=value, the value parsed as JSON when possible.
void apply_config_override(RegistrationConfig& config, const std::string& assignment);
std::string config_to_json(const RegistrationConfig& config);

std::string trace_record_json(const TraceRecord& record);

}  // namespace fieldreg
