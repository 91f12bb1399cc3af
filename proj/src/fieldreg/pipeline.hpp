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

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fieldreg/io.hpp"
#include "fieldreg/registration.hpp"

namespace fieldreg {

struct DistillRequest {
  int resolution = 128;
  double delta = 0.05;
  double epsilon = 0.5;
  std::vector<double> sigmas = {0.0};
  DistillOptions options;
  FieldSource source = FieldSource::kSurface;
};

/// Base field on a resolution^3 cube grid over the scene ball, then one
/// smoothed copy per sigma. The surface source thresholds S at epsilon;
/// density is tau / max tau; radiance is emission luminance where tau > 0.
DistilledFields distill_scene(const DensityScene& scene, const DistillRequest& request);

/// Reuses <scene_dir>/distilled/<source>/ when it was built with the same
/// parameters; missing sigma levels are added from the stored base field.
DistilledFields load_or_distill(const fs::path& scene_dir, const DensityScene& scene,
                                const DistillRequest& request, bool* reused = nullptr);

/// Keypoints for a scene pair, triangulating click lists through each
/// scene's cameras.
KeypointSet resolve_pair(const KeypointFile& file, const DensityScene& a, const DensityScene& b);

struct PairRequest {
  fs::path scene_a;
  fs::path scene_b;
  KeypointFile keypoints;
  RegistrationConfig config;
  int restarts = 10;
  int resolution = 128;
  double delta = 0.05;
  double epsilon = 0.5;
};

struct PairResult {
  MultiStartResult registration;
  KeypointSet keypoints;
  SigmaPlan sigmas;
};

/// phase is "distilling" once fields are being prepared, then every trace
/// record is forwarded to the observer.
using PhaseCallback = std::function<void(const std::string& phase)>;

PairResult register_scene_pair(const PairRequest& request, const RegistrationObserver& observer = {},
                               const PhaseCallback& on_phase = {});

}  // namespace fieldreg
