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

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "fieldreg/geometry.hpp"
#include "fieldreg/grid.hpp"

namespace fieldreg {

struct MaterialSample {
  double density = 0.0;
  Vec3 color = Vec3::Zero();
};

/// Constant-density solid built from primitives. Leaves carry density and
/// emission color; unions take the densest child; instances pose a child
/// with a world_from_local transform.
class AnalyticShape {
 public:
  enum class Kind { kSphere, kBox, kCapsule, kUnion, kInstance };

  static AnalyticShape sphere(const Vec3& center, double radius, double density,
                              const Vec3& color = Vec3::Ones());
  static AnalyticShape box(const Vec3& center, const Vec3& half_extents, double density,
                           const Vec3& color = Vec3::Ones());
  static AnalyticShape capsule(const Vec3& a, const Vec3& b, double radius, double density,
                               const Vec3& color = Vec3::Ones());
  static AnalyticShape make_union(std::vector<AnalyticShape> children);
  static AnalyticShape instance(const RigidTransform& world_from_local, AnalyticShape child);

  Kind kind() const { return kind_; }
  MaterialSample evaluate(const Vec3& x) const;
  double density(const Vec3& x) const { return evaluate(x).density; }
  /// Signed distance to the boundary (negative inside).
  double signed_distance(const Vec3& x) const;
  double max_density() const;
  /// Copy with every leaf color replaced.
  AnalyticShape recolored(const Vec3& color) const;
  /// Points on the outer boundary, area-weighted across leaves.
  std::vector<Vec3> sample_surface(std::size_t n, std::uint64_t seed) const;

  // Leaf/node parameters, read by serialization.
  const Vec3& center() const { return p0_; }
  const Vec3& endpoint() const { return p1_; }
  const Vec3& half_extents() const { return p1_; }
  double radius() const { return radius_; }
  double leaf_density() const { return density_; }
  const Vec3& color() const { return color_; }
  const std::vector<AnalyticShape>& children() const { return children_; }
  const RigidTransform& pose() const { return pose_; }

 private:
  double leaf_sdf(const Vec3& x) const;
  double leaf_area() const;
  void collect_leaves(const RigidTransform& world_from_node,
                      std::vector<std::pair<const AnalyticShape*, RigidTransform>>& out) const;

  Kind kind_ = Kind::kUnion;
  Vec3 p0_ = Vec3::Zero();
  Vec3 p1_ = Vec3::Zero();
  double radius_ = 0.0;
  double density_ = 0.0;
  Vec3 color_ = Vec3::Ones();
  std::vector<AnalyticShape> children_;
  RigidTransform pose_;
};

struct VoxelDensity {
  Grid3 density;
  std::optional<std::array<Grid3, 3>> rgb;
};

/// Bounded density field over the ball B(0, radius) plus calibrated cameras.
class DensityScene {
 public:
  DensityScene(AnalyticShape shape, double radius, std::vector<PinholeCamera> cameras,
               bool has_emission = true);
  DensityScene(VoxelDensity voxels, double radius, std::vector<PinholeCamera> cameras);

  double radius() const { return radius_; }
  const std::vector<PinholeCamera>& cameras() const { return cameras_; }

  /// tau(x); zero outside the ball.
  double density(const Vec3& x) const {
    if (x.squaredNorm() > radius2_) return 0.0;
    return std::holds_alternative<AnalyticShape>(source_)
               ? std::get<AnalyticShape>(source_).density(x)
               : std::get<VoxelDensity>(source_).density.sample(x);
  }
  bool has_emission() const { return has_emission_; }
  /// Emission color, black where no emission field is defined.
  Vec3 emission(const Vec3& x) const;
  double max_density() const;

  const AnalyticShape* analytic() const { return std::get_if<AnalyticShape>(&source_); }
  const VoxelDensity* voxels() const { return std::get_if<VoxelDensity>(&source_); }

  /// Copy of the scene with the density, emission and cameras moved by G.
  /// Analytic scenes only.
  DensityScene transformed(const RigidTransform& G) const;

 private:
  std::variant<AnalyticShape, VoxelDensity> source_;
  double radius_;
  double radius2_;
  std::vector<PinholeCamera> cameras_;
  bool has_emission_;
};

/// Cameras on a sphere of `distance` around `target`, spread by a Fibonacci
/// lattice, all looking at the target.
std::vector<PinholeCamera> camera_ring(std::size_t count, const Vec3& target, double distance,
                                       double focal, int width, int height);

}  // namespace fieldreg
