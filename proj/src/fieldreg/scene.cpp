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

#include "fieldreg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace fieldreg {

namespace {

void check_leaf(double density, double size) {
  if (!(density >= 0.0) || !std::isfinite(density)) {
    fail(ErrorCode::kInvalidArgument, "primitive density must be finite and non-negative");
  }
  if (!(size > 0.0)) fail(ErrorCode::kInvalidArgument, "primitive size must be positive");
}

double segment_distance(const Vec3& x, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (x - (a + s * ab)).norm();
}

}  // namespace

AnalyticShape AnalyticShape::sphere(const Vec3& center, double radius, double density,
                                    const Vec3& color) {
  check_leaf(density, radius);
  AnalyticShape s;
  s.kind_ = Kind::kSphere;
  s.p0_ = center;
  s.radius_ = radius;
  s.density_ = density;
  s.color_ = color;
  return s;
}

AnalyticShape AnalyticShape::box(const Vec3& center, const Vec3& half_extents, double density,
                                 const Vec3& color) {
  check_leaf(density, half_extents.minCoeff());
  AnalyticShape s;
  s.kind_ = Kind::kBox;
  s.p0_ = center;
  s.p1_ = half_extents;
  s.density_ = density;
  s.color_ = color;
  return s;
}

AnalyticShape AnalyticShape::capsule(const Vec3& a, const Vec3& b, double radius, double density,
                                     const Vec3& color) {
  check_leaf(density, radius);
  AnalyticShape s;
  s.kind_ = Kind::kCapsule;
  s.p0_ = a;
  s.p1_ = b;
  s.radius_ = radius;
  s.density_ = density;
  s.color_ = color;
  return s;
}

AnalyticShape AnalyticShape::make_union(std::vector<AnalyticShape> children) {
  if (children.empty()) fail(ErrorCode::kInvalidArgument, "union needs at least one child");
  AnalyticShape s;
  s.kind_ = Kind::kUnion;
  s.children_ = std::move(children);
  return s;
}

AnalyticShape AnalyticShape::instance(const RigidTransform& world_from_local, AnalyticShape child) {
  AnalyticShape s;
  s.kind_ = Kind::kInstance;
  s.pose_ = world_from_local;
  s.children_.push_back(std::move(child));
  return s;
}

double AnalyticShape::leaf_sdf(const Vec3& x) const {
  switch (kind_) {
    case Kind::kSphere:
      return (x - p0_).norm() - radius_;
    case Kind::kBox: {
      const Vec3 q = (x - p0_).cwiseAbs() - p1_;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case Kind::kCapsule:
      return segment_distance(x, p0_, p1_) - radius_;
    default:
      return std::numeric_limits<double>::infinity();
  }
}

MaterialSample AnalyticShape::evaluate(const Vec3& x) const {
  switch (kind_) {
    case Kind::kSphere:
      if ((x - p0_).squaredNorm() <= radius_ * radius_) return {density_, color_};
      return {};
    case Kind::kBox:
      if (((x - p0_).cwiseAbs() - p1_).maxCoeff() <= 0.0) return {density_, color_};
      return {};
    case Kind::kCapsule:
      if (segment_distance(x, p0_, p1_) <= radius_) return {density_, color_};
      return {};
    case Kind::kUnion: {
      MaterialSample best;
      for (const AnalyticShape& c : children_) {
        const MaterialSample m = c.evaluate(x);
        if (m.density > best.density) best = m;
      }
      return best;
    }
    case Kind::kInstance:
      return children_.front().evaluate(pose_.rotation().transpose() * (x - pose_.translation()));
  }
  return {};
}

double AnalyticShape::signed_distance(const Vec3& x) const {
  switch (kind_) {
    case Kind::kUnion: {
      double d = std::numeric_limits<double>::infinity();
      for (const AnalyticShape& c : children_) d = std::min(d, c.signed_distance(x));
      return d;
    }
    case Kind::kInstance:
      return children_.front().signed_distance(pose_.rotation().transpose() *
                                               (x - pose_.translation()));
    default:
      return leaf_sdf(x);
  }
}

double AnalyticShape::max_density() const {
  if (kind_ == Kind::kUnion || kind_ == Kind::kInstance) {
    double m = 0.0;
    for (const AnalyticShape& c : children_) m = std::max(m, c.max_density());
    return m;
  }
  return density_;
}

AnalyticShape AnalyticShape::recolored(const Vec3& color) const {
  AnalyticShape s = *this;
  s.color_ = color;
  for (AnalyticShape& c : s.children_) c = c.recolored(color);
  return s;
}

double AnalyticShape::leaf_area() const {
  const double pi = std::numbers::pi;
  switch (kind_) {
    case Kind::kSphere:
      return 4.0 * pi * radius_ * radius_;
    case Kind::kBox:
      return 8.0 * (p1_.x() * p1_.y() + p1_.y() * p1_.z() + p1_.x() * p1_.z());
    case Kind::kCapsule:
      return 2.0 * pi * radius_ * (p1_ - p0_).norm() + 4.0 * pi * radius_ * radius_;
    default:
      return 0.0;
  }
}

void AnalyticShape::collect_leaves(
    const RigidTransform& world_from_node,
    std::vector<std::pair<const AnalyticShape*, RigidTransform>>& out) const {
  switch (kind_) {
    case Kind::kUnion:
      for (const AnalyticShape& c : children_) c.collect_leaves(world_from_node, out);
      break;
    case Kind::kInstance:
      children_.front().collect_leaves(compose(world_from_node, pose_), out);
      break;
    default:
      out.emplace_back(this, world_from_node);
  }
}

std::vector<Vec3> AnalyticShape::sample_surface(std::size_t n, std::uint64_t seed) const {
  std::vector<std::pair<const AnalyticShape*, RigidTransform>> leaves;
  collect_leaves(RigidTransform::identity(), leaves);
  std::vector<double> areas;
  for (const auto& [leaf, pose] : leaves) areas.push_back(leaf->leaf_area());

  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick_leaf(areas.begin(), areas.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_direction = [&]() {
    Vec3 d(gauss(rng), gauss(rng), gauss(rng));
    return Vec3(d.normalized());
  };

  std::vector<Vec3> points;
  points.reserve(n);
  const std::size_t max_attempts = 64 * n + 64;
  for (std::size_t attempt = 0; attempt < max_attempts && points.size() < n; ++attempt) {
    const auto& [leaf, pose] = leaves[pick_leaf(rng)];
    Vec3 local;
    switch (leaf->kind_) {
      case Kind::kSphere:
        local = leaf->p0_ + leaf->radius_ * random_direction();
        break;
      case Kind::kBox: {
        const Vec3& h = leaf->p1_;
        const double face_area[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
        std::discrete_distribution<int> pick_axis(std::begin(face_area), std::end(face_area));
        const int axis = pick_axis(rng);
        Vec3 q(2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0);
        q[axis] = unit(rng) < 0.5 ? -1.0 : 1.0;
        local = leaf->p0_ + q.cwiseProduct(h);
        break;
      }
      case Kind::kCapsule: {
        const Vec3 ab = leaf->p1_ - leaf->p0_;
        const double side = 2.0 * std::numbers::pi * leaf->radius_ * ab.norm();
        const double caps = 4.0 * std::numbers::pi * leaf->radius_ * leaf->radius_;
        if (unit(rng) * (side + caps) < side) {
          const Vec3 axis = ab.normalized();
          Vec3 radial = random_direction();
          radial -= radial.dot(axis) * axis;
          if (radial.norm() < 1e-9) continue;
          local = leaf->p0_ + unit(rng) * ab + leaf->radius_ * radial.normalized();
        } else {
          const Vec3 d = random_direction();
          const Vec3& end = d.dot(ab) >= 0.0 ? leaf->p1_ : leaf->p0_;
          local = end + leaf->radius_ * d;
        }
        break;
      }
      default:
        continue;
    }
    const Vec3 x = pose.apply(local);
    // Discard points buried inside another primitive.
    if (signed_distance(x) >= -1e-9) points.push_back(x);
  }
  return points;
}

DensityScene::DensityScene(AnalyticShape shape, double radius, std::vector<PinholeCamera> cameras,
                           bool has_emission)
    : source_(std::move(shape)),
      radius_(radius),
      radius2_(radius * radius),
      cameras_(std::move(cameras)),
      has_emission_(has_emission) {
  if (!(radius > 0.0)) fail(ErrorCode::kInvalidArgument, "scene radius must be positive");
}

DensityScene::DensityScene(VoxelDensity voxels, double radius, std::vector<PinholeCamera> cameras)
    : source_(std::move(voxels)),
      radius_(radius),
      radius2_(radius * radius),
      cameras_(std::move(cameras)),
      has_emission_(false) {
  if (!(radius > 0.0)) fail(ErrorCode::kInvalidArgument, "scene radius must be positive");
  const VoxelDensity& v = std::get<VoxelDensity>(source_);
  for (float tau : v.density.values) {
    if (!(tau >= 0.0f)) fail(ErrorCode::kInvalidArgument, "density grid has negative or NaN values");
  }
  if (v.rgb) {
    for (const Grid3& g : *v.rgb) {
      if (!g.same_layout(v.density)) {
        fail(ErrorCode::kInvalidArgument, "rgb grid layout differs from the density grid");
      }
    }
    has_emission_ = true;
  }
}

Vec3 DensityScene::emission(const Vec3& x) const {
  if (!has_emission_ || x.squaredNorm() > radius2_) return Vec3::Zero();
  if (const AnalyticShape* shape = analytic()) return shape->evaluate(x).color;
  const auto& rgb = *voxels()->rgb;
  return {rgb[0].sample(x), rgb[1].sample(x), rgb[2].sample(x)};
}

double DensityScene::max_density() const {
  if (const AnalyticShape* shape = analytic()) return shape->max_density();
  const auto& values = voxels()->density.values;
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

DensityScene DensityScene::transformed(const RigidTransform& G) const {
  const AnalyticShape* shape = analytic();
  if (shape == nullptr) fail(ErrorCode::kInvalidArgument, "only analytic scenes can be transformed");
  std::vector<PinholeCamera> cams = cameras_;
  for (PinholeCamera& c : cams) c.world_from_camera = compose(G, c.world_from_camera);
  return DensityScene(AnalyticShape::instance(G, *shape), radius_, std::move(cams), has_emission_);
}

std::vector<PinholeCamera> camera_ring(std::size_t count, const Vec3& target, double distance,
                                       double focal, int width, int height) {
  std::vector<PinholeCamera> cams;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vec3 dir(rho * std::cos(phi), rho * std::sin(phi), z);
    const Vec3 up = std::abs(z) > 0.95 ? Vec3::UnitY() : Vec3::UnitZ();
    cams.push_back(PinholeCamera::look_at(target + distance * dir, target, up, focal, width, height));
  }
  return cams;
}

}  // namespace fieldreg
