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

#include "fieldreg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fieldreg {

namespace {

const double kInvE2 = std::exp(-2.0);

double point_residual(const Vec3& x, const SmoothedField& a, const SmoothedField& b,
                      const RigidTransform& T) {
  return std::abs(a.query(x) - b.query(T.apply(x)));
}

}  // namespace

double compute_xi_s(std::span<const Vec3> points, const SmoothedField& surface_a) {
  if (points.empty()) fail(ErrorCode::kEmptySampleSet, "xi_S of an empty sample set");
  double best = 0.0;
  for (const Vec3& x : points) best = std::max(best, surface_a.query(x));
  return best * kInvE2;
}

ActiveSampleSet ActiveSampleSet::bootstrap(std::span<const Vec3> q_a, double rho, double radius,
                                           std::uint64_t seed, std::size_t max_samples) {
  if (q_a.empty()) fail(ErrorCode::kEmptyKeypoints, "sampler bootstrap needs keypoints");
  if (!(rho > 0.0) || !(radius > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "sampler needs positive rho and radius");
  }
  ActiveSampleSet set;
  set.points_.assign(q_a.begin(), q_a.end());
  set.rho_ = rho;
  set.radius_ = radius;
  set.max_samples_ = std::max(max_samples, q_a.size());
  set.bootstrap_size_ = q_a.size();
  set.rng_.seed(seed);
  for (std::size_t i = 0; i < set.points_.size(); ++i) set.index_point(i);
  return set;
}

ActiveSampleSet::CellKey ActiveSampleSet::cell_of(const Vec3& x) const {
  const double cell = rho_ / 10.0;
  const auto q = [&](double v) { return static_cast<std::int64_t>(std::floor(v / cell)) & 0x1FFFFF; };
  return q(x.x()) | (q(x.y()) << 21) | (q(x.z()) << 42);
}

void ActiveSampleSet::index_point(std::size_t i) { cells_[cell_of(points_[i])].push_back(i); }

bool ActiveSampleSet::near_existing(const Vec3& x) const {
  const double cell = rho_ / 10.0;
  const double min_dist2 = cell * cell;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const auto it = cells_.find(cell_of(x + cell * Vec3(dx, dy, dz)));
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) {
          if ((points_[i] - x).squaredNorm() < min_dist2) return true;
        }
      }
    }
  }
  return false;
}

std::size_t ActiveSampleSet::update(const SmoothedField& surface_a, const SmoothedField& surface_b,
                                    const RigidTransform& a_to_b, double kernel_c,
                                    std::size_t field_level) {
  if (points_.empty()) fail(ErrorCode::kEmptySampleSet, "sampler update on an empty set");
  UpdateContext ctx;
  ctx.size_before = points_.size();
  ctx.transform = a_to_b;
  ctx.field_level = field_level;
  ctx.xi_s = compute_xi_s(points_, surface_a);
  ctx.xi_r = kernel_c;

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double radius2 = radius_ * radius_;
  std::vector<Vec3> accepted;
  for (std::size_t i = 0; i < ctx.size_before; ++i) {
    const Vec3 x = points_[i] + rho_ * Vec3(unit(rng_), unit(rng_), unit(rng_));
    if (x.squaredNorm() > radius2) continue;
    if (surface_a.query(x) < ctx.xi_s) continue;
    if (point_residual(x, surface_a, surface_b, a_to_b) > ctx.xi_r) continue;
    if (near_existing(x)) continue;
    accepted.push_back(x);
  }
  for (const Vec3& x : accepted) {
    if (points_.size() >= max_samples_) {
      capped_ = true;
      break;
    }
    points_.push_back(x);
    index_point(points_.size() - 1);
  }
  ctx.size_after = points_.size();
  history_.push_back(ctx);
  return ctx.size_after - ctx.size_before;
}

void ActiveSampleSet::resample_uniform(std::size_t count) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  points_.clear();
  cells_.clear();
  history_.clear();
  bootstrap_size_ = 0;
  while (points_.size() < count) {
    const Vec3 p(unit(rng_), unit(rng_), unit(rng_));
    if (p.squaredNorm() <= 1.0) points_.push_back(radius_ * p);
  }
}

SamplerAudit audit(const ActiveSampleSet& set, std::span<const SmoothedField> levels_a,
                   std::span<const SmoothedField> levels_b) {
  SamplerAudit report;
  const auto& pts = set.points();
  const double min_dist = set.rho() / 10.0;
  std::size_t previous_size = set.bootstrap_size();
  for (const UpdateContext& ctx : set.history()) {
    if (ctx.size_before < previous_size || ctx.size_after < ctx.size_before) report.monotone = false;
    previous_size = ctx.size_after;
    if (ctx.field_level >= levels_a.size() || ctx.field_level >= levels_b.size()) {
      fail(ErrorCode::kOutOfRange, "audit: update used an unknown field level");
    }
    const SmoothedField& a = levels_a[ctx.field_level];
    const SmoothedField& b = levels_b[ctx.field_level];
    for (std::size_t i = ctx.size_before; i < ctx.size_after; ++i) {
      const Vec3& x = pts[i];
      bool ok = x.norm() <= set.radius() && a.query(x) >= ctx.xi_s &&
                point_residual(x, a, b, ctx.transform) <= ctx.xi_r;
      for (std::size_t j = 0; ok && j < ctx.size_before; ++j) {
        ok = (pts[j] - x).norm() >= min_dist;
      }
      ++report.checked;
      if (!ok) ++report.failed;
    }
  }
  return report;
}

}  // namespace fieldreg
