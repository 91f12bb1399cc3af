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

#include "fieldreg/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fieldreg {

namespace {

// Beyond this optical depth transmittance is below 1e-13 and treated as zero.
constexpr double kOpaqueDepth = 30.0;

double resolve_step(const DensityScene& scene, double step) {
  return step > 0.0 ? step : default_step(scene.radius());
}

// Parameter interval where the ray is inside the scene ball.
bool ball_interval(const Ray& ray, double radius, double& t0, double& t1) {
  const double b = ray.origin.dot(ray.direction);
  const double c = ray.origin.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  t0 = std::max(0.0, -b - s);
  t1 = -b + s;
  return t1 > t0;
}

double checked_density(const DensityScene& scene, const Vec3& x) {
  const double tau = scene.density(x);
  if (!std::isfinite(tau)) fail(ErrorCode::kNonFiniteDensity, "density field returned a non-finite value");
  return tau;
}

// Optical depth over [0, t]; stops early once it exceeds `cutoff`.
double optical_depth(const DensityScene& scene, const Ray& ray, double t, double h, double cutoff) {
  if (t <= 0.0) return 0.0;
  double t0 = 0.0;
  double t1 = 0.0;
  if (!ball_interval(ray, scene.radius(), t0, t1)) return 0.0;
  const double end = std::min(t, t1);
  if (end <= t0) return 0.0;
  const long first = static_cast<long>(std::floor(t0 / h));
  double depth = 0.0;
  for (long k = first;; ++k) {
    const double lo = k * h;
    if (lo >= end) break;
    const double covered = std::min(h, t - lo);
    if (covered <= 0.0) break;
    depth += covered * checked_density(scene, ray.at(lo + 0.5 * h));
    if (depth > cutoff) break;
  }
  return depth;
}

}  // namespace

double transmittance(const DensityScene& scene, const Ray& ray, double t, double step) {
  if (!(t >= 0.0)) fail(ErrorCode::kInvalidArgument, "transmittance depth must be non-negative");
  const double h = resolve_step(scene, step);
  return std::exp(-optical_depth(scene, ray, t, h, std::numeric_limits<double>::infinity()));
}

double surface_likelihood_along_ray(const DensityScene& scene, const Ray& ray, double t,
                                    double delta, double step) {
  if (!(delta >= 0.0) || !(t >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "surface likelihood needs t >= 0 and delta >= 0");
  }
  const double tau = checked_density(scene, ray.at(t));
  if (tau == 0.0) return 0.0;
  const double hit = -std::expm1(-2.0 * tau * delta);
  const double depth = optical_depth(scene, ray, std::max(0.0, t - delta),
                                     resolve_step(scene, step), kOpaqueDepth);
  if (depth > kOpaqueDepth) return 0.0;
  return std::exp(-depth) * hit;
}

double surface_field_at(const DensityScene& scene, const Vec3& x, double delta, double step) {
  const double tau = checked_density(scene, x);
  if (tau == 0.0) return 0.0;
  const double h = resolve_step(scene, step);
  const double hit = -std::expm1(-2.0 * tau * delta);
  double best = 0.0;
  for (const PinholeCamera& cam : scene.cameras()) {
    const Vec3 offset = x - cam.origin();
    const double t = offset.norm();
    if (t == 0.0) {
      best = std::max(best, hit);
    } else {
      const Ray ray(cam.origin(), offset);
      const double depth = optical_depth(scene, ray, std::max(0.0, t - delta), h, kOpaqueDepth);
      if (depth <= kOpaqueDepth) best = std::max(best, std::exp(-depth) * hit);
    }
    // No camera can exceed the unoccluded likelihood.
    if (best >= hit) break;
  }
  return best;
}

SurfaceFieldGrid extract_surface_field(const DensityScene& scene, const SurfaceFieldOptions& options) {
  if (scene.cameras().empty()) fail(ErrorCode::kNoCameras, "surface field needs at least one camera");
  if (!(options.delta >= 0.0)) fail(ErrorCode::kInvalidArgument, "delta must be non-negative");
  if (!(options.epsilon > 0.0 && options.epsilon < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "epsilon must lie in (0, 1)");
  }
  SurfaceFieldGrid out;
  out.values = Grid3::cube(scene.radius(), options.resolution);
  out.epsilon = options.epsilon;
  out.delta = options.delta;
  const long n = static_cast<long>(out.values.size());
  Grid3& grid = out.values;
#pragma omp parallel for schedule(dynamic, 4096)
  for (long idx = 0; idx < n; ++idx) {
    grid.values[idx] = static_cast<float>(
        surface_field_at(scene, grid.node(static_cast<std::size_t>(idx)), options.delta, options.step));
  }
  return out;
}

Grid3 threshold(const SurfaceFieldGrid& field) {
  if (!(field.epsilon > 0.0 && field.epsilon < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "epsilon must lie in (0, 1)");
  }
  Grid3 out = field.values;
  for (float& v : out.values) v = v > field.epsilon ? 1.0f : 0.0f;
  return out;
}

RenderedView render(const DensityScene& scene, const PinholeCamera& camera,
                    const RenderOptions& options) {
  const double h = resolve_step(scene, options.step);
  RenderedView view;
  view.width = camera.width;
  view.height = camera.height;
  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  const bool with_rgb = scene.has_emission();
  if (with_rgb) view.rgb.assign(3 * pixels, 0.0f);
  view.depth.assign(pixels, std::numeric_limits<float>::quiet_NaN());
  view.opacity.assign(pixels, 0.0f);

#pragma omp parallel for schedule(dynamic, 16)
  for (int row = 0; row < camera.height; ++row) {
    for (int col = 0; col < camera.width; ++col) {
      const std::size_t p = static_cast<std::size_t>(row) * camera.width + col;
      const Ray ray = camera.ray_through(col + 0.5, row + 0.5);
      double trans = 1.0;
      double weight_sum = 0.0;
      double depth_sum = 0.0;
      Vec3 color = Vec3::Zero();
      double t0 = 0.0;
      double t1 = 0.0;
      if (ball_interval(ray, scene.radius(), t0, t1)) {
        for (long k = static_cast<long>(std::floor(t0 / h)); k * h < t1; ++k) {
          const double mid = (k + 0.5) * h;
          const Vec3 x = ray.at(mid);
          const double tau = checked_density(scene, x);
          if (tau <= 0.0) continue;
          const double alpha = -std::expm1(-tau * h);
          const double w = trans * alpha;
          weight_sum += w;
          depth_sum += w * mid;
          if (with_rgb) color += w * scene.emission(x);
          trans *= 1.0 - alpha;
          if (trans < 1e-10) break;
        }
      }
      view.opacity[p] = static_cast<float>(weight_sum);
      if (weight_sum > options.opacity_min) view.depth[p] = static_cast<float>(depth_sum / weight_sum);
      if (with_rgb) {
        const Vec3 c = color + (1.0 - weight_sum) * options.background;
        for (int ch = 0; ch < 3; ++ch) view.rgb[3 * p + ch] = static_cast<float>(c[ch]);
      }
    }
  }
  return view;
}

std::vector<Vec3> export_point_cloud(const DensityScene& scene, const PointCloudOptions& options) {
  if (scene.cameras().empty()) fail(ErrorCode::kNoCameras, "point cloud export needs cameras");
  std::vector<Vec3> points;
  for (const PinholeCamera& native : scene.cameras()) {
    const PinholeCamera cam = options.width > 0 ? native.resized(options.width) : native;
    const RenderedView view = render(scene, cam, options.render);
    for (int row = 0; row < cam.height; ++row) {
      for (int col = 0; col < cam.width; ++col) {
        const std::size_t p = static_cast<std::size_t>(row) * cam.width + col;
        if (!view.depth_valid(p)) continue;
        const Vec3 x = cam.ray_through(col + 0.5, row + 0.5).at(view.depth[p]);
        if (options.crop && !options.crop->contains(x)) continue;
        points.push_back(x);
      }
    }
  }
  return points;
}

Box3 bounding_box(const std::vector<Vec3>& points, double margin) {
  if (points.empty()) fail(ErrorCode::kInvalidArgument, "bounding box of an empty point set");
  Box3 box{points.front(), points.front()};
  for (const Vec3& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  box.min.array() -= margin;
  box.max.array() += margin;
  return box;
}

}  // namespace fieldreg
