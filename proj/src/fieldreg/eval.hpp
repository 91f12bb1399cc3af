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

#include <span>

#include "fieldreg/geometry.hpp"

namespace fieldreg {

/// Intrinsic XYZ angles (a, b, c) in radians with R = Rx(a) * Ry(b) * Rz(c).
Vec3 euler_xyz(const Mat3& R);
Mat3 from_euler_xyz(const Vec3& angles);

struct PoseError {
  double delta_t = 0.0;  // scene units
  double delta_R = 0.0;  // degrees
  bool gimbal_warning = false;
};

/// RMSE of the translation difference and of the Euler angles of
/// R_pred * R_gt^T.
PoseError pose_error(const RigidTransform& pred, const RigidTransform& gt);

/// Mean |pred(v) - gt(v)| over the vertices, divided by the largest pairwise
/// vertex distance.
double add3d(std::span<const Vec3> vertices, const RigidTransform& pred, const RigidTransform& gt);

double diameter(std::span<const Vec3> vertices);

}  // namespace fieldreg
