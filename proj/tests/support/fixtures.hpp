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

// Scenes shared by the unit and acceptance tests.

#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fieldreg/registration.hpp"
#include "fieldreg/scene.hpp"

namespace fieldreg::testing {

// Slab |x|,|y| <= 0.6, |z| <= 0.3 seen by one camera on +z.
inline DensityScene slab_scene(double tau, bool emission = true) {
  AnalyticShape slab = AnalyticShape::box(Vec3::Zero(), Vec3(0.6, 0.6, 0.3), tau);
  std::vector<PinholeCamera> cams{
      PinholeCamera::look_at(Vec3(0, 0, 2), Vec3::Zero(), Vec3::UnitY(), 40.0, 33, 33)};
  return DensityScene(slab, 1.0, cams, emission);
}

// Box, sphere and capsule glued together; no symmetry.
inline AnalyticShape asymmetric_object(double scale = 1.0) {
  const double s = scale;
  return AnalyticShape::make_union({
      AnalyticShape::box(s * Vec3(0, 0, -0.1), s * Vec3(0.35, 0.2, 0.05), 50, Vec3(0.8, 0.3, 0.2)),
      AnalyticShape::sphere(s * Vec3(0.2, 0.1, 0.12), s * 0.12, 50, Vec3(0.2, 0.7, 0.3)),
      AnalyticShape::capsule(s * Vec3(-0.25, -0.1, -0.05), s * Vec3(-0.1, 0.15, 0.3), s * 0.06, 50,
                             Vec3(0.2, 0.3, 0.9)),
  });
}

inline std::vector<PinholeCamera> ring_cameras() {
  return camera_ring(16, Vec3::Zero(), 2.5, 60, 64, 64);
}

inline RigidTransform self_registration_truth() {
  return RigidTransform::from_axis_angle(Vec3(0.1, 0.25, -0.3), Vec3(0.1, -0.05, 0.08));
}

struct PairFixture {
  DensityScene a;
  DensityScene b;
  RigidTransform truth;  // A -> B
  KeypointSet keypoints;
  std::vector<Vec3> vertices;  // surface of the object being registered, in A
};

// Keypoints at fixed surface samples, each perturbed by N(0, noise).
inline KeypointSet noisy_keypoints(const std::vector<Vec3>& on_a, const RigidTransform& truth,
                                   double noise, std::uint64_t seed) {
  KeypointSet q;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  for (const Vec3& p : on_a) {
    q.q_a.push_back(p + Vec3(n(rng), n(rng), n(rng)));
    q.q_b.push_back(truth.apply(p) + Vec3(n(rng), n(rng), n(rng)));
  }
  return q;
}

// B is A moved by a known rigid transform; four keypoints with noise 0.01 r.
inline PairFixture self_registration_fixture() {
  const AnalyticShape object = asymmetric_object();
  DensityScene a(object, 1.0, ring_cameras());
  const RigidTransform truth = self_registration_truth();
  DensityScene b = a.transformed(truth);
  const auto surface = object.sample_surface(400, 7);
  std::vector<Vec3> picks{surface[0], surface[100], surface[200], surface[300]};
  KeypointSet q = noisy_keypoints(picks, truth, 0.01, 3);
  return {std::move(a), std::move(b), truth, std::move(q), object.sample_surface(2000, 1)};
}

// Two copies of one object. Only the first copy moves by `truth`; the
// second sits at an unrelated pose in each scene.
inline PairFixture twin_objects_fixture() {
  const AnalyticShape unit = AnalyticShape::make_union({
      AnalyticShape::box(Vec3(0, 0, -0.05), Vec3(0.18, 0.1, 0.03), 50),
      AnalyticShape::sphere(Vec3(0.1, 0.05, 0.06), 0.06, 50),
      AnalyticShape::capsule(Vec3(-0.12, -0.05, -0.03), Vec3(-0.05, 0.08, 0.15), 0.035, 50),
  });
  const RigidTransform first = RigidTransform::from_axis_angle(Vec3::Zero(), Vec3(-0.35, 0.05, 0));
  const RigidTransform second_a =
      RigidTransform::from_axis_angle(Vec3(0, 0, 1.2), Vec3(0.35, -0.1, 0.05));
  const RigidTransform second_b =
      RigidTransform::from_axis_angle(Vec3(0.4, -0.3, -0.6), Vec3(-0.1, -0.45, -0.1));
  const RigidTransform truth =
      RigidTransform::from_axis_angle(Vec3(0.1, 0.2, -0.25), Vec3(0.08, -0.05, 0.06));

  AnalyticShape scene_a = AnalyticShape::make_union(
      {AnalyticShape::instance(first, unit), AnalyticShape::instance(second_a, unit)});
  AnalyticShape scene_b = AnalyticShape::make_union(
      {AnalyticShape::instance(compose(truth, first), unit), AnalyticShape::instance(second_b, unit)});

  const auto surface = unit.sample_surface(400, 11);
  std::vector<Vec3> picks;
  for (int i : {0, 100, 200, 300}) picks.push_back(first.apply(surface[i]));
  KeypointSet q = noisy_keypoints(picks, truth, 0.01, 5);
  std::vector<Vec3> vertices;
  for (const Vec3& p : unit.sample_surface(2000, 1)) vertices.push_back(first.apply(p));
  return {DensityScene(scene_a, 1.0, ring_cameras()), DensityScene(scene_b, 1.0, ring_cameras()),
          truth, std::move(q), std::move(vertices)};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fieldreg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fieldreg::testing
