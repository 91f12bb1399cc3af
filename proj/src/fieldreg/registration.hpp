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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fieldreg/distill.hpp"
#include "fieldreg/geometry.hpp"
#include "fieldreg/sampler.hpp"

namespace fieldreg {

struct RobustKernelParams {
  double c = 0.3;
  double alpha = 2.0;
};

struct KernelValue {
  double value = 0.0;
  double d_residual = 0.0;
  double d_c = 0.0;
  double d_alpha = 0.0;
};

/// General adaptive robust loss
///   k(r; c, a) = |a-2|/a * [((r/c)^2/|a-2| + 1)^(a/2) - 1]
/// with its a = 2 (half squared) and a = 0 (log) limits.
double robust_kernel(double residual, const RobustKernelParams& params);
KernelValue robust_kernel_eval(double residual, const RobustKernelParams& params);

/// log of the normalizer Z(c, a) = integral over r in [0, 1] of exp(-k(r; c, a)),
/// with derivatives in c and a. Residuals are bounded by 1, so the density is
/// proper for every a.
struct LogPartition {
  double value = 0.0;
  double d_c = 0.0;
  double d_alpha = 0.0;
};
LogPartition kernel_log_partition(const RobustKernelParams& params);

/// lambda(t) = (1 + cos(t pi / T)) / 2, and sigma(t) = sigma_end +
/// (sigma_start - sigma_end) * lambda(t).
class Schedule {
 public:
  Schedule(int total_steps, double sigma_start, double sigma_end);

  int total_steps() const { return total_steps_; }
  double sigma_start() const { return sigma_start_; }
  double sigma_end() const { return sigma_end_; }
  double lambda(int t) const;
  double sigma(int t) const;

 private:
  int total_steps_;
  double sigma_start_;
  double sigma_end_;
};

/// Index-aligned correspondences: q_a[i] in scene A pairs with q_b[i] in B.
struct KeypointSet {
  std::vector<Vec3> q_a;
  std::vector<Vec3> q_b;

  /// KeypointMismatch on unequal lengths, InvalidArgument below 3 pairs.
  void validate() const;
  std::size_t size() const { return q_a.size(); }
  /// Mean over the two sets of the largest pairwise distance.
  double extent() const;
};

struct AblationToggles {
  bool no_lambda_annealing = false;
  bool fixed_sigma = false;
  bool uniform_sampling = false;
  bool density_residual = false;
  bool radiance_residual = false;
};

struct RegistrationConfig {
  int total_steps = 10000;
  int warmup_steps = 2000;
  double lr_rotation = 0.02;
  double lr_translation = 0.01;
  double lr_kernel = 0.01;
  int sampler_interval = 20;
  // sigma^(0) and sigma^(T) as fractions of the keypoint extent d.
  double sigma_start_ratio = 0.2;
  double sigma_end_ratio = 0.1;
  int sigma_levels = 5;
  double kernel_c = 0.3;
  double kernel_alpha = 2.0;
  double alpha_min = -10.0;
  double alpha_max = 2.0;
  double c_min = 1e-3;
  double c_max = 10.0;
  // rho as a fraction of the scene radius.
  double rho_ratio = 0.01;
  std::size_t max_samples = ActiveSampleSet::kDefaultMaxSamples;
  std::size_t uniform_samples = 2048;
  std::optional<double> lambda_override;
  PoseParams initial_pose;
  std::uint64_t seed = 0;
  AblationToggles ablation;

  void validate() const;
  /// Fine-scale profile for objects only partly visible in one scene:
  /// sigma from d/10 down to one voxel, pose learning rate 5e-4.
  static RegistrationConfig partial_object();
};

/// sigma levels the schedule will visit. A zero sigma^(T) is replaced by
/// `finest`, normally one voxel.
struct SigmaPlan {
  double start = 0.0;
  double end = 0.0;
  std::vector<double> levels;  // ascending
};
SigmaPlan plan_sigmas(const RegistrationConfig& config, const KeypointSet& keypoints, double finest);
std::vector<double> geometric_levels(double lo, double hi, int count);

/// |S_a(x) - S_b(T x)|.
double residual(const Vec3& x, const SmoothedField& surface_a, const SmoothedField& surface_b,
                const RigidTransform& a_to_b);

/// Mean kernel-transformed residual over the sample set.
double matching_loss(std::span<const Vec3> samples, const SmoothedField& surface_a,
                     const SmoothedField& surface_b, const RigidTransform& a_to_b,
                     const RobustKernelParams& kernel);

/// Sum over pairs of |q_a - T q_b|^2.
double keypoint_loss(const KeypointSet& keypoints, const RigidTransform& transform);

/// (1 - lambda) * match + lambda * key.
double total_loss(double lambda, double match, double key);
double total_loss(int t, const Schedule& schedule, double match, double key);

/// Parameter vector [axis-angle (3), translation (3), log c, alpha] of the
/// A -> B transform and the kernel.
using ParamVector = Eigen::Matrix<double, 8, 1>;
ParamVector pack_params(const PoseParams& pose, const RobustKernelParams& kernel);
void unpack_params(const ParamVector& p, PoseParams& pose, RobustKernelParams& kernel);

/// Keypoint energy of the A -> B transform, sum |T q_a - q_b|^2, which equals
/// keypoint_loss(Q, T^-1). Gradient is with respect to (axis-angle, t).
double keypoint_energy(const KeypointSet& keypoints, const PoseParams& pose,
                       Eigen::Matrix<double, 6, 1>* gradient = nullptr);

struct ObjectiveValue {
  double objective = 0.0;  // (1-lambda) * (match + log Z) + lambda * key
  double total = 0.0;      // (1-lambda) * match + lambda * key
  double match = 0.0;
  double key = 0.0;
  double log_partition = 0.0;
  ParamVector gradient = ParamVector::Zero();
};

/// Objective and analytic gradient. Pose components of the gradient come
/// from `total`; the kernel components from `objective`. `cached_a` may hold
/// S_a at each sample to skip those lookups.
ObjectiveValue evaluate_objective(std::span<const Vec3> samples, const SmoothedField& surface_a,
                                  const SmoothedField& surface_b, const KeypointSet& keypoints,
                                  const ParamVector& params, double lambda,
                                  std::span<const double> cached_a = {});

/// Max over components of |analytic - central difference|, divided by the
/// largest central-difference magnitude. Step is 1e-4 * max(1, |p_i|).
using GradientFunction = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;
double gradient_check(const GradientFunction& fn, const Eigen::VectorXd& params);

struct TraceRecord {
  int restart = 0;
  std::string phase;  // warmup | registering | final
  int step = 0;
  double lambda = 0.0;
  double sigma = 0.0;
  double loss_total = 0.0;
  double loss_match = 0.0;
  double loss_key = 0.0;
  double objective = 0.0;
  PoseParams pose;
  std::size_t n_samples = 0;
  double c = 0.0;
  double alpha = 0.0;
  bool sample_cap_hit = false;
};

struct RegistrationResult {
  RigidTransform transform;  // maps scene A into scene B
  PoseParams pose;
  RobustKernelParams kernel;
  double final_loss = 0.0;
  std::vector<TraceRecord> trace;
  ActiveSampleSet samples;
  SigmaPlan sigmas;
};

/// Thrown when the loss or its gradient stops being finite. Carries the
/// trace up to and including the offending step.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& message, std::vector<TraceRecord> trace)
      : Error(ErrorCode::kNonFiniteLoss, message), trace_(std::move(trace)) {}
  const std::vector<TraceRecord>& trace() const { return trace_; }

 private:
  std::vector<TraceRecord> trace_;
};

/// Called after every step with the latest record and the active set.
using RegistrationObserver = std::function<void(const TraceRecord&, const ActiveSampleSet&)>;

/// Fields for scenes A and B at matching sigma levels.
struct FieldPair {
  std::span<const SmoothedField> a;
  std::span<const SmoothedField> b;
  double radius_a = 1.0;
};

/// Keypoint-only warmup followed by the annealed two-term optimization with
/// periodic active-set growth. Deterministic given config.seed.
RegistrationResult register_fields(const FieldPair& fields, const KeypointSet& keypoints,
                                   const RegistrationConfig& config,
                                   const RegistrationObserver& observer = {}, int restart = 0);

struct MultiStartResult {
  RegistrationResult best;
  int chosen_restart = 0;
  std::vector<std::optional<double>> final_losses;  // empty when the restart failed
  std::vector<std::vector<TraceRecord>> traces;
};

/// Runs `restarts` seeded copies (seed + i) and keeps the lowest final loss.
/// Rethrows NonFiniteLossError only when every restart fails.
MultiStartResult register_best_of(const FieldPair& fields, const KeypointSet& keypoints,
                                  const RegistrationConfig& config, int restarts,
                                  const RegistrationObserver& observer = {});

std::size_t nearest_level(std::span<const SmoothedField> levels, double sigma);

}  // namespace fieldreg
