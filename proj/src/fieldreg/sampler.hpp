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

#include <cstdint>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "fieldreg/distill.hpp"
#include "fieldreg/geometry.hpp"

namespace fieldreg {

/// max over A of S_a(x), divided by e^2.
double compute_xi_s(std::span<const Vec3> points, const SmoothedField& surface_a);

/// Parameters in force during one update, kept so accepted points can be
/// audited later.
struct UpdateContext {
  std::size_t size_before = 0;
  std::size_t size_after = 0;
  RigidTransform transform;
  std::size_t field_level = 0;
  double xi_s = 0.0;
  double xi_r = 0.0;
};

/// Active set of sample locations in scene A, grown by proposing one
/// candidate per existing point uniformly in the cube [-rho, rho]^3 and
/// keeping candidates that (1) lie on the surface of A (S_a >= xi_s),
/// (2) agree with B under the current transform (residual <= xi_r = c), and
/// (3) are at least rho/10 from every point of the pre-update set.
class ActiveSampleSet {
 public:
  static constexpr std::size_t kDefaultMaxSamples = 20000;

  /// A^(0) = q_a exactly. Throws EmptyKeypoints for an empty list.
  static ActiveSampleSet bootstrap(std::span<const Vec3> q_a, double rho, double radius,
                                   std::uint64_t seed,
                                   std::size_t max_samples = kDefaultMaxSamples);

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double rho() const { return rho_; }
  double radius() const { return radius_; }
  std::size_t max_samples() const { return max_samples_; }
  bool capped() const { return capped_; }
  std::size_t bootstrap_size() const { return bootstrap_size_; }
  const std::vector<UpdateContext>& history() const { return history_; }

  /// One growth step; returns the number of accepted candidates.
  std::size_t update(const SmoothedField& surface_a, const SmoothedField& surface_b,
                     const RigidTransform& a_to_b, double kernel_c, std::size_t field_level = 0);

  /// Replaces the set with `count` points uniform in B(0, radius). Used by the
  /// uniform-sampling ablation; clears the update history.
  void resample_uniform(std::size_t count);

 private:
  using CellKey = std::int64_t;

  CellKey cell_of(const Vec3& x) const;
  bool near_existing(const Vec3& x) const;
  void index_point(std::size_t i);

  std::vector<Vec3> points_;
  double rho_ = 0.0;
  double radius_ = 0.0;
  std::size_t max_samples_ = kDefaultMaxSamples;
  std::size_t bootstrap_size_ = 0;
  bool capped_ = false;
  std::mt19937_64 rng_;
  std::unordered_map<CellKey, std::vector<std::size_t>> cells_;
  std::vector<UpdateContext> history_;
};

struct SamplerAudit {
  std::size_t checked = 0;
  std::size_t failed = 0;
  bool monotone = true;
};

/// Re-evaluates all three acceptance predicates for every point accepted by
/// an update, using the transform and thresholds recorded for that update.
/// `levels_a[i]` / `levels_b[i]` must be the fields used with field_level i.
SamplerAudit audit(const ActiveSampleSet& set, std::span<const SmoothedField> levels_a,
                   std::span<const SmoothedField> levels_b);

}  // namespace fieldreg
