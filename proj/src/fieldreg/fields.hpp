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

#include <optional>
#include <vector>

#include "fieldreg/grid.hpp"
#include "fieldreg/scene.hpp"

namespace fieldreg {

// Quadrature: the ray is cut into cells [k h, (k+1) h] measured from its
// origin, density is read at cell midpoints, and a partially covered last cell
// contributes its covered length times its midpoint density. Every term is
// non-negative, so transmittance is non-increasing in t.

/// Default quadrature step for a scene of this radius.
inline double default_step(double radius) { return radius / 256.0; }

/// exp(-integral_0^t tau(r(s)) ds). step <= 0 selects default_step.
/// Throws NonFiniteDensity if the field returns NaN or infinity.
double transmittance(const DensityScene& scene, const Ray& ray, double t, double step = 0.0);

/// Likelihood of hitting the surface within delta of depth t:
/// T(0 -> t - delta) * (1 - exp(-2 tau(r(t)) delta)).
double surface_likelihood_along_ray(const DensityScene& scene, const Ray& ray, double t,
                                    double delta, double step = 0.0);

struct SurfaceFieldOptions {
  int resolution = 128;
  double delta = 0.05;
  double epsilon = 0.5;
  double step = 0.0;
};

/// Surface likelihood S(x) sampled on a cube grid spanning [-r, r]^3.
struct SurfaceFieldGrid {
  Grid3 values;
  double epsilon = 0.5;
  double delta = 0.05;

  int resolution() const { return values.res[0]; }
};

/// S(x) at one point: max over camera origins o of the likelihood along the
/// ray from o through x, at depth |x - o|.
double surface_field_at(const DensityScene& scene, const Vec3& x, double delta, double step = 0.0);

/// Throws NoCameras when the scene has none.
SurfaceFieldGrid extract_surface_field(const DensityScene& scene,
                                       const SurfaceFieldOptions& options = {});

/// Indicator S(x) > epsilon per node (strict).
Grid3 threshold(const SurfaceFieldGrid& field);

struct RenderOptions {
  double step = 0.0;
  Vec3 background = Vec3::Zero();
  /// Pixels whose accumulated opacity does not exceed this have no depth.
  double opacity_min = 0.5;
};

struct RenderedView {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;    // 3 floats per pixel, row-major; empty without emission
  std::vector<float> depth;  // expected ray depth, NaN where invalid
  std::vector<float> opacity;

  bool depth_valid(std::size_t pixel) const { return depth[pixel] == depth[pixel]; }
};

RenderedView render(const DensityScene& scene, const PinholeCamera& camera,
                    const RenderOptions& options = {});

struct Box3 {
  Vec3 min;
  Vec3 max;
  bool contains(const Vec3& x) const {
    return (x.array() >= min.array()).all() && (x.array() <= max.array()).all();
  }
};

struct PointCloudOptions {
  int width = 0;  // render width per camera, 0 = native
  std::optional<Box3> crop;
  RenderOptions render;
};

/// Back-projects valid expected-depth pixels of every camera.
std::vector<Vec3> export_point_cloud(const DensityScene& scene, const PointCloudOptions& options = {});

/// Axis-aligned box around points, grown by `margin` on every side.
Box3 bounding_box(const std::vector<Vec3>& points, double margin);

}  // namespace fieldreg
