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

#include "fieldreg/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace fieldreg {

namespace {

bool same_sigma(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

Grid3 base_field(const DensityScene& scene, const DistillRequest& request) {
  Grid3 grid = Grid3::cube(scene.radius(), request.resolution);
  const long n = static_cast<long>(grid.size());
  switch (request.source) {
    case FieldSource::kSurface: {
      SurfaceFieldOptions opts;
      opts.resolution = request.resolution;
      opts.delta = request.delta;
      opts.epsilon = request.epsilon;
      SurfaceFieldGrid surface = extract_surface_field(scene, opts);
      return threshold(surface);
    }
    case FieldSource::kDensity: {
      const double scale = scene.max_density();
      if (!(scale > 0.0)) fail(ErrorCode::kDegenerateField, "scene has no density");
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) {
        grid.values[i] = static_cast<float>(scene.density(grid.node(static_cast<std::size_t>(i))) / scale);
      }
      return grid;
    }
    case FieldSource::kRadiance: {
      if (!scene.has_emission()) fail(ErrorCode::kDegenerateField, "scene has no emission");
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) {
        const Vec3 x = grid.node(static_cast<std::size_t>(i));
        if (scene.density(x) <= 0.0) continue;
        const Vec3 rgb = scene.emission(x);
        grid.values[i] = static_cast<float>(
            std::clamp(0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z(), 0.0, 1.0));
      }
      return grid;
    }
  }
  return grid;
}

bool same_base(const DistilledFields& f, const DistillRequest& r) {
  return f.source == r.source && f.resolution == r.resolution && f.delta == r.delta &&
         f.epsilon == r.epsilon;
}

std::string method_name(const DistillOptions& o) {
  return o.method == DistillOptions::Method::kConvolution ? "convolution" : "monte_carlo";
}

bool same_smoothing(const DistilledFields& f, const DistillRequest& r) {
  if (f.method != method_name(r.options)) return false;
  if (r.options.method == DistillOptions::Method::kConvolution) return true;
  return f.samples == r.options.samples && f.seed == r.options.seed;
}

}  // namespace

DistilledFields distill_scene(const DensityScene& scene, const DistillRequest& request) {
  if (request.resolution < 2) fail(ErrorCode::kInvalidArgument, "resolution must be >= 2");
  DistilledFields out;
  out.source = request.source;
  out.epsilon = request.epsilon;
  out.delta = request.delta;
  out.resolution = request.resolution;
  out.method = method_name(request.options);
  out.samples = request.options.samples;
  out.seed = request.options.seed;
  out.base = base_field(scene, request);
  out.levels = distill_grid(out.base, request.sigmas, request.options);
  return out;
}

DistilledFields load_or_distill(const fs::path& scene_dir, const DensityScene& scene,
                                const DistillRequest& request, bool* reused) {
  const fs::path dir = scene_dir / "distilled" / to_string(request.source);
  if (reused) *reused = false;
  std::optional<DistilledFields> cached = load_distilled(dir);
  if (cached && same_base(*cached, request) && same_smoothing(*cached, request)) {
    bool all_present = true;
    std::vector<SmoothedField> levels;
    for (double s : request.sigmas) {
      const auto it = std::find_if(cached->levels.begin(), cached->levels.end(),
                                   [&](const SmoothedField& f) { return same_sigma(f.sigma(), s); });
      if (it == cached->levels.end()) {
        all_present = false;
        break;
      }
      levels.push_back(*it);
    }
    if (all_present) {
      if (reused) *reused = true;
      cached->levels = std::move(levels);
      return *cached;
    }
  }
  DistilledFields fresh;
  if (cached && same_base(*cached, request)) {
    fresh = std::move(*cached);
    fresh.method = method_name(request.options);
    fresh.samples = request.options.samples;
    fresh.seed = request.options.seed;
    fresh.levels = distill_grid(fresh.base, request.sigmas, request.options);
  } else {
    fresh = distill_scene(scene, request);
  }
  save_distilled(dir, fresh);
  return fresh;
}

KeypointSet resolve_pair(const KeypointFile& file, const DensityScene& a, const DensityScene& b) {
  if (file.a.size() != file.b.size()) {
    fail(ErrorCode::kKeypointMismatch, "keypoint counts differ (" + std::to_string(file.a.size()) + " vs " +
                                           std::to_string(file.b.size()) + ")");
  }
  KeypointSet q;
  q.q_a = resolve_keypoints(file.a, a);
  q.q_b = resolve_keypoints(file.b, b);
  q.validate();
  return q;
}

PairResult register_scene_pair(const PairRequest& request, const RegistrationObserver& observer,
                               const PhaseCallback& on_phase) {
  const DensityScene scene_a = load_scene(request.scene_a);
  const DensityScene scene_b = load_scene(request.scene_b);
  PairResult out;
  out.keypoints = resolve_pair(request.keypoints, scene_a, scene_b);
  request.config.validate();

  const double voxel = 2.0 * scene_a.radius() / (request.resolution - 1);
  out.sigmas = plan_sigmas(request.config, out.keypoints, voxel);

  DistillRequest distill;
  distill.resolution = request.resolution;
  distill.delta = request.delta;
  distill.epsilon = request.epsilon;
  distill.sigmas = out.sigmas.levels;
  if (request.config.ablation.density_residual) distill.source = FieldSource::kDensity;
  if (request.config.ablation.radiance_residual) distill.source = FieldSource::kRadiance;

  if (on_phase) on_phase("distilling");
  const DistilledFields fields_a = load_or_distill(request.scene_a, scene_a, distill);
  const DistilledFields fields_b = load_or_distill(request.scene_b, scene_b, distill);

  FieldPair pair{fields_a.levels, fields_b.levels, scene_a.radius()};
  out.registration = register_best_of(pair, out.keypoints, request.config, request.restarts, observer);
  return out;
}

}  // namespace fieldreg
