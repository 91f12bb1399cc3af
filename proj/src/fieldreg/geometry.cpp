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

#include "fieldreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fieldreg {

namespace {

constexpr double kRotationTolerance = 1e-6;
constexpr double kParallelTolerance = 1e-9;

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 K = skew(omega);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * K + b * K * K;
}

Vec3 so3_log(const Mat3& R) {
  // The quaternion route stays accurate near theta = pi, where the
  // antisymmetric part of R vanishes.
  Eigen::Quaterniond q(R);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  if (n == 0.0) return Vec3::Zero();
  return 2.0 * std::atan2(n, q.w()) / n * q.vec();
}

Mat3 so3_right_jacobian(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 K = skew(omega);
  if (theta2 < 1e-12) {
    return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  }
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() - a * K + b * K * K;
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    fail(ErrorCode::kInvalidArgument, "rigid transform has non-finite entries");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho > kRotationTolerance || std::abs(det - 1.0) > kRotationTolerance) {
    fail(ErrorCode::kInvalidArgument, "rotation is not orthonormal with det +1");
  }
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& omega, const Vec3& t) {
  return {so3_exp(omega), t};
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  const Eigen::RowVector4d last = m.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    fail(ErrorCode::kInvalidArgument, "homogeneous transform must end with row (0 0 0 1)");
  }
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation_ = rotation_.transpose();
  inv.translation_ = -(inv.rotation_ * translation_);
  return inv;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation() * b.rotation(), a.apply(b.translation()));
}

RigidTransform PoseParams::to_transform() const {
  return RigidTransform(so3_exp(axis_angle), translation);
}

PoseParams PoseParams::from_transform(const RigidTransform& T) {
  return {so3_log(T.rotation()), T.translation()};
}

void PoseParams::canonicalize() {
  const double theta = axis_angle.norm();
  if (theta <= std::numbers::pi) return;
  const double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(theta, two_pi);
  if (wrapped > std::numbers::pi) wrapped -= two_pi;
  // Negative wrapped angle flips the axis, keeping the norm in [0, pi].
  axis_angle *= wrapped / theta;
}

Ray::Ray(const Vec3& o, const Vec3& d) : origin(o) {
  const double n = d.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    fail(ErrorCode::kInvalidArgument, "ray direction must be a finite non-zero vector");
  }
  direction = d / n;
}

Ray PinholeCamera::ray_through(double u, double v) const {
  const Vec3 local((u - cx) / fx, (v - cy) / fy, 1.0);
  return Ray(origin(), world_from_camera.rotation() * local);
}

std::optional<Vec2> PinholeCamera::project(const Vec3& x) const {
  const Vec3 local = world_from_camera.rotation().transpose() * (x - origin());
  if (local.z() <= 0.0) return std::nullopt;
  return Vec2(fx * local.x() / local.z() + cx, fy * local.y() / local.z() + cy);
}

PinholeCamera PinholeCamera::resized(int new_width) const {
  if (new_width <= 0) fail(ErrorCode::kInvalidArgument, "image width must be positive");
  const double s = static_cast<double>(new_width) / width;
  PinholeCamera c = *this;
  c.fx *= s;
  c.fy *= s;
  c.cx *= s;
  c.cy *= s;
  c.width = new_width;
  c.height = std::max(1, static_cast<int>(std::lround(height * s)));
  return c;
}

PinholeCamera PinholeCamera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                                     double focal, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  PinholeCamera cam;
  cam.world_from_camera = RigidTransform(R, eye);
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  return cam;
}

TriangulatedPoint triangulate(const Ray& ray_a, const Ray& ray_b) {
  const double b = ray_a.direction.dot(ray_b.direction);
  if (std::abs(b) >= 1.0 - kParallelTolerance) {
    fail(ErrorCode::kParallelRays, "rays are parallel");
  }
  const Vec3 w0 = ray_a.origin - ray_b.origin;
  const double d = ray_a.direction.dot(w0);
  const double e = ray_b.direction.dot(w0);
  const double denom = 1.0 - b * b;
  const double s = (b * e - d) / denom;
  const double u = (e - b * d) / denom;
  const Vec3 pa = ray_a.at(s);
  const Vec3 pb = ray_b.at(u);
  return {0.5 * (pa + pb), (pa - pb).norm()};
}

Vec3 triangulate_rays(std::span<const Ray> rays) {
  if (rays.size() < 2) fail(ErrorCode::kInsufficientViews, "need at least two rays");
  if (rays.size() == 2) return triangulate(rays[0], rays[1]).point;
  Mat3 A = Mat3::Zero();
  Vec3 rhs = Vec3::Zero();
  for (const Ray& ray : rays) {
    const Mat3 P = Mat3::Identity() - ray.direction * ray.direction.transpose();
    A += P;
    rhs += P * ray.origin;
  }
  // All-parallel bundles leave A rank 2.
  Eigen::SelfAdjointEigenSolver<Mat3> eig(A);
  if (eig.eigenvalues().minCoeff() <= kParallelTolerance * eig.eigenvalues().maxCoeff()) {
    fail(ErrorCode::kParallelRays, "ray bundle is parallel");
  }
  return A.ldlt().solve(rhs);
}

std::vector<Vec3> triangulate_keypoints(const std::vector<std::vector<Click>>& clicks,
                                        std::span<const PinholeCamera> cameras) {
  if (clicks.size() < 3) {
    fail(ErrorCode::kInvalidArgument,
         "at least three keypoints are required, got " + std::to_string(clicks.size()));
  }
  std::vector<Vec3> points;
  points.reserve(clicks.size());
  for (std::size_t k = 0; k < clicks.size(); ++k) {
    if (clicks[k].size() < 2) {
      fail(ErrorCode::kInsufficientViews,
           "keypoint " + std::to_string(k) + " has clicks in fewer than two views");
    }
    std::vector<Ray> rays;
    for (const Click& c : clicks[k]) {
      if (c.view < 0 || static_cast<std::size_t>(c.view) >= cameras.size()) {
        fail(ErrorCode::kOutOfRange, "click references unknown view " + std::to_string(c.view));
      }
      rays.push_back(cameras[c.view].ray_through(c.u, c.v));
    }
    points.push_back(triangulate_rays(rays));
  }
  return points;
}

RigidTransform closed_form_alignment(std::span<const Vec3> q_a, std::span<const Vec3> q_b) {
  if (q_a.size() != q_b.size()) {
    fail(ErrorCode::kInvalidArgument, "point sets differ in size");
  }
  if (q_a.size() < 3) {
    fail(ErrorCode::kDegenerateConfiguration, "need at least three correspondences");
  }
  const double n = static_cast<double>(q_a.size());
  Vec3 mean_a = Vec3::Zero();
  Vec3 mean_b = Vec3::Zero();
  for (std::size_t i = 0; i < q_a.size(); ++i) {
    mean_a += q_a[i];
    mean_b += q_b[i];
  }
  mean_a /= n;
  mean_b /= n;

  Mat3 H = Mat3::Zero();
  Mat3 spread_a = Mat3::Zero();
  Mat3 spread_b = Mat3::Zero();
  for (std::size_t i = 0; i < q_a.size(); ++i) {
    const Vec3 a = q_a[i] - mean_a;
    const Vec3 b = q_b[i] - mean_b;
    H += b * a.transpose();
    spread_a += a * a.transpose();
    spread_b += b * b.transpose();
  }
  auto collinear = [](const Mat3& spread) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(spread);
    const Vec3 ev = eig.eigenvalues();  // ascending
    return ev(2) <= 0.0 || ev(1) <= 1e-12 * ev(2);
  };
  if (collinear(spread_a) || collinear(spread_b)) {
    fail(ErrorCode::kDegenerateConfiguration, "point set is collinear");
  }

  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  if ((V * U.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  Mat3 R = V * D * U.transpose();
  // Re-orthonormalize to absorb SVD round-off.
  Eigen::JacobiSVD<Mat3> clean(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  R = clean.matrixU() * clean.matrixV().transpose();
  return RigidTransform(R, mean_a - R * mean_b);
}

}  // namespace fieldreg
