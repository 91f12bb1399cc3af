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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fieldreg/errors.hpp"

namespace fieldreg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

Mat3 skew(const Vec3& v);

/// Rotation matrix of the axis-angle vector `omega` (Rodrigues).
Mat3 so3_exp(const Vec3& omega);

/// Axis-angle vector with norm in [0, pi] such that so3_exp(result) == R.
Vec3 so3_log(const Mat3& R);

/// Right Jacobian of SO(3): exp(w + d) ~= exp(w) * exp(Jr(w) * d).
Mat3 so3_right_jacobian(const Vec3& omega);

/// Rigid motion x -> R x + t. Rotation is validated on construction.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform from_axis_angle(const Vec3& omega, const Vec3& t = Vec3::Zero());
  /// Row-major 4x4, last row must be (0 0 0 1).
  static RigidTransform from_matrix(const Mat4& m);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  Vec3 operator()(const Vec3& x) const { return apply(x); }

  RigidTransform inverse() const;
  Mat4 matrix() const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// compose(a, b)(x) == a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Unconstrained optimizer parameterization of a rigid transform.
struct PoseParams {
  Vec3 axis_angle = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  RigidTransform to_transform() const;
  static PoseParams from_transform(const RigidTransform& T);

  /// Wraps the rotation angle back into [0, pi] without changing the rotation.
  void canonicalize();
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Ray() = default;
  /// Normalizes `direction`; throws InvalidArgument for a zero vector.
  Ray(const Vec3& origin, const Vec3& direction);

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Pinhole camera, OpenCV convention: +z forward, +x right, +y down.
/// Pixel coordinates are continuous; pixel (i, j) has its center at
/// (i + 0.5, j + 0.5).
struct PinholeCamera {
  RigidTransform world_from_camera;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Vec3 origin() const { return world_from_camera.translation(); }
  Ray ray_through(double u, double v) const;
  /// Pixel coordinates of a world point, empty when behind the camera.
  std::optional<Vec2> project(const Vec3& x) const;
  /// Same camera with intrinsics rescaled to a new image width.
  PinholeCamera resized(int new_width) const;

  /// Camera at `eye` looking at `target`; `up` is the approximate world up.
  static PinholeCamera look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                               double focal, int width, int height);
};

struct TriangulatedPoint {
  Vec3 point;
  double gap = 0.0;  // length of the common perpendicular
};

/// Midpoint of the common perpendicular between two rays.
/// Throws ParallelRays when |d_a . d_b| >= 1 - 1e-9.
TriangulatedPoint triangulate(const Ray& ray_a, const Ray& ray_b);

/// Least-squares point closest to all rays (sum of squared distances).
Vec3 triangulate_rays(std::span<const Ray> rays);

struct Click {
  int view = 0;
  double u = 0.0;
  double v = 0.0;
};

/// One 3D point per keypoint. Each keypoint needs clicks in >= 2 views and at
/// least three keypoints are required.
std::vector<Vec3> triangulate_keypoints(const std::vector<std::vector<Click>>& clicks,
                                        std::span<const PinholeCamera> cameras);

/// Least-squares rigid T minimizing sum ||q_a - T(q_b)||^2 (Kabsch/Horn).
/// Throws DegenerateConfiguration for collinear input.
RigidTransform closed_form_alignment(std::span<const Vec3> q_a, std::span<const Vec3> q_b);

}  // namespace fieldreg
