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

#include "fieldreg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fieldreg {

namespace {

constexpr double kGimbalBand = 1e-3;

}  // namespace

Vec3 euler_xyz(const Mat3& R) {
  const double b = std::asin(std::clamp(R(0, 2), -1.0, 1.0));
  const double a = std::atan2(-R(1, 2), R(2, 2));
  const double c = std::atan2(-R(0, 1), R(0, 0));
  return {a, b, c};
}

Mat3 from_euler_xyz(const Vec3& angles) {
  return (Eigen::AngleAxisd(angles.x(), Vec3::UnitX()) * Eigen::AngleAxisd(angles.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(angles.z(), Vec3::UnitZ()))
      .toRotationMatrix();
}

PoseError pose_error(const RigidTransform& pred, const RigidTransform& gt) {
  PoseError e;
  const Vec3 dt = pred.translation() - gt.translation();
  e.delta_t = std::sqrt(dt.squaredNorm() / 3.0);
  const Vec3 angles = euler_xyz(pred.rotation() * gt.rotation().transpose()) * (180.0 / std::numbers::pi);
  e.delta_R = std::sqrt(angles.squaredNorm() / 3.0);
  e.gimbal_warning = std::abs(std::abs(angles.y()) - 90.0) < kGimbalBand;
  return e;
}

double diameter(std::span<const Vec3> vertices) {
  double best = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < vertices.size(); ++j) {
      best = std::max(best, (vertices[i] - vertices[j]).norm());
    }
  }
  return best;
}

double add3d(std::span<const Vec3> vertices, const RigidTransform& pred, const RigidTransform& gt) {
  if (vertices.empty()) fail(ErrorCode::kEmptyMesh, "3D-ADD needs at least one vertex");
  const double d = diameter(vertices);
  if (!(d > 0.0)) fail(ErrorCode::kZeroDiameter, "3D-ADD needs a vertex set with positive diameter");
  double sum = 0.0;
  for (const Vec3& v : vertices) sum += (pred.apply(v) - gt.apply(v)).norm();
  return sum / static_cast<double>(vertices.size()) / d;
}

}  // namespace fieldreg
