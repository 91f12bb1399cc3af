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

#include "fieldreg/registration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace fieldreg {

namespace {

constexpr double kSpecialBand = 1e-6;
constexpr double kAlphaProbe = 1e-4;

// Generic branch, valid away from a = 0 and a = 2.
KernelValue kernel_general(double r, double c, double a) {
  const double z = (r / c) * (r / c);
  const double b = std::abs(a - 2.0);
  const double s = a > 2.0 ? 1.0 : -1.0;
  const double p = 0.5 * a;
  const double log_u = std::log1p(z / b);
  const double u = z / b + 1.0;
  const double up_m1 = std::expm1(p * log_u);
  KernelValue k;
  k.value = (b / a) * up_m1;
  k.d_residual = (r / (c * c)) * std::exp((p - 1.0) * log_u);
  k.d_c = -k.d_residual * r / c;
  const double du = -z * s / (b * b);
  const double dup = (up_m1 + 1.0) * (0.5 * log_u + p * du / u);
  k.d_alpha = (s / a - b / (a * a)) * up_m1 + (b / a) * dup;
  return k;
}

// 8-point Gauss-Legendre on dyadic intervals of [0, 1], refined toward 0.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const Quadrature& partition_quadrature() {
  static const Quadrature q = [] {
    constexpr std::array<double, 4> x = {0.1834346424956498, 0.5255324099163290,
                                         0.7966664774136267, 0.9602898564975363};
    constexpr std::array<double, 4> w = {0.3626837833783620, 0.3137066458778873,
                                         0.2223810344533745, 0.1012285362903763};
    Quadrature out;
    std::vector<double> edges = {0.0};
    for (int e = -16; e <= 0; ++e) edges.push_back(std::ldexp(1.0, e));
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const double mid = 0.5 * (edges[i] + edges[i + 1]);
      const double half = 0.5 * (edges[i + 1] - edges[i]);
      for (std::size_t j = 0; j < x.size(); ++j) {
        out.nodes.push_back(mid - half * x[j]);
        out.weights.push_back(half * w[j]);
        out.nodes.push_back(mid + half * x[j]);
        out.weights.push_back(half * w[j]);
      }
    }
    return out;
  }();
  return q;
}

bool all_finite(const ObjectiveValue& v) {
  return std::isfinite(v.objective) && std::isfinite(v.total) && v.gradient.allFinite();
}

}  // namespace

KernelValue robust_kernel_eval(double residual, const RobustKernelParams& params) {
  const double r = residual;
  const double c = params.c;
  const double a = params.alpha;
  if (!(c > 0.0)) fail(ErrorCode::kInvalidArgument, "kernel scale c must be positive");
  if (r < 0.0) fail(ErrorCode::kInvalidArgument, "residual must be non-negative");
  const double z = (r / c) * (r / c);
  if (std::abs(a - 2.0) < kSpecialBand) {
    KernelValue k;
    k.value = 0.5 * z;
    k.d_residual = r / (c * c);
    k.d_c = -k.d_residual * r / c;
    k.d_alpha = kernel_general(r, c, 2.0 - kAlphaProbe).d_alpha;
    return k;
  }
  if (std::abs(a) < kSpecialBand) {
    KernelValue k;
    k.value = std::log1p(0.5 * z);
    k.d_residual = (r / (c * c)) / (0.5 * z + 1.0);
    k.d_c = -k.d_residual * r / c;
    k.d_alpha = 0.5 * (kernel_general(r, c, kAlphaProbe).d_alpha +
                       kernel_general(r, c, -kAlphaProbe).d_alpha);
    return k;
  }
  return kernel_general(r, c, a);
}

double robust_kernel(double residual, const RobustKernelParams& params) {
  return robust_kernel_eval(residual, params).value;
}

LogPartition kernel_log_partition(const RobustKernelParams& params) {
  const Quadrature& q = partition_quadrature();
  double z = 0.0;
  double dz_c = 0.0;
  double dz_a = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const KernelValue k = robust_kernel_eval(q.nodes[i], params);
    const double e = q.weights[i] * std::exp(-k.value);
    z += e;
    dz_c -= e * k.d_c;
    dz_a -= e * k.d_alpha;
  }
  return {std::log(z), dz_c / z, dz_a / z};
}

Schedule::Schedule(int total_steps, double sigma_start, double sigma_end)
    : total_steps_(total_steps), sigma_start_(sigma_start), sigma_end_(sigma_end) {
  if (total_steps < 1) fail(ErrorCode::kInvalidArgument, "schedule needs at least one step");
  if (!(sigma_start >= 0.0) || !(sigma_end >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "schedule sigmas must be non-negative");
  }
}

double Schedule::lambda(int t) const {
  const int clamped = std::clamp(t, 0, total_steps_);
  return 0.5 * (1.0 + std::cos(clamped * std::numbers::pi / total_steps_));
}

double Schedule::sigma(int t) const {
  return sigma_end_ + (sigma_start_ - sigma_end_) * lambda(t);
}

void KeypointSet::validate() const {
  if (q_a.size() != q_b.size()) {
    fail(ErrorCode::kKeypointMismatch, "keypoint lists differ in length (" + std::to_string(q_a.size()) +
                                           " vs " + std::to_string(q_b.size()) + ")");
  }
  if (q_a.size() < 3) fail(ErrorCode::kInvalidArgument, "at least 3 keypoint pairs are required");
}

double KeypointSet::extent() const {
  auto diameter = [](const std::vector<Vec3>& pts) {
    double best = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).norm());
    }
    return best;
  };
  return 0.5 * (diameter(q_a) + diameter(q_b));
}

void RegistrationConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kInvalidArgument, std::string("invalid registration config: ") + what);
  };
  require(total_steps > 0, "total_steps must be positive");
  require(warmup_steps >= 0, "warmup_steps must be non-negative");
  require(lr_rotation > 0.0 && lr_translation > 0.0 && lr_kernel > 0.0, "learning rates must be positive");
  require(sampler_interval > 0, "sampler_interval must be positive");
  require(sigma_start_ratio > 0.0 && sigma_end_ratio >= 0.0, "sigma ratios out of range");
  require(sigma_levels >= 1, "sigma_levels must be >= 1");
  require(kernel_c > 0.0 && c_min > 0.0 && c_min < c_max, "kernel scale out of range");
  require(alpha_min < alpha_max && kernel_alpha >= alpha_min && kernel_alpha <= alpha_max,
          "kernel shape out of range");
  require(rho_ratio > 0.0, "rho_ratio must be positive");
  require(max_samples > 0 && uniform_samples > 0, "sample counts must be positive");
  require(!lambda_override || (*lambda_override >= 0.0 && *lambda_override <= 1.0),
          "lambda_override must lie in [0, 1]");
}

RegistrationConfig RegistrationConfig::partial_object() {
  RegistrationConfig c;
  c.sigma_start_ratio = 0.1;
  c.sigma_end_ratio = 0.0;
  c.lr_rotation = 5e-4;
  c.lr_translation = 5e-4;
  c.lr_kernel = 0.01;
  return c;
}

std::vector<double> geometric_levels(double lo, double hi, int count) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "need at least one sigma level");
  if (!(lo >= 0.0) || !(hi >= lo)) fail(ErrorCode::kInvalidArgument, "sigma range out of order");
  if (count == 1 || hi == lo) return {hi};
  std::vector<double> out;
  if (lo == 0.0) {
    out.push_back(0.0);
    const std::vector<double> rest = geometric_levels(hi / std::ldexp(1.0, count - 2), hi, count - 1);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
  }
  for (int i = 0; i < count; ++i) {
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

SigmaPlan plan_sigmas(const RegistrationConfig& config, const KeypointSet& keypoints, double finest) {
  const double d = keypoints.extent();
  if (!(d > 0.0)) fail(ErrorCode::kDegenerateConfiguration, "keypoints are all coincident");
  SigmaPlan plan;
  plan.start = config.sigma_start_ratio * d;
  plan.end = config.sigma_end_ratio * d;
  if (plan.end == 0.0) plan.end = finest;
  if (plan.end > plan.start) std::swap(plan.start, plan.end);
  plan.levels = geometric_levels(plan.end, plan.start, config.sigma_levels);
  return plan;
}

double residual(const Vec3& x, const SmoothedField& surface_a, const SmoothedField& surface_b,
                const RigidTransform& a_to_b) {
  return std::abs(surface_a.query(x) - surface_b.query(a_to_b.apply(x)));
}

double matching_loss(std::span<const Vec3> samples, const SmoothedField& surface_a,
                     const SmoothedField& surface_b, const RigidTransform& a_to_b,
                     const RobustKernelParams& kernel) {
  if (samples.empty()) fail(ErrorCode::kEmptySampleSet, "matching loss over an empty sample set");
  double sum = 0.0;
  for (const Vec3& x : samples) sum += robust_kernel(residual(x, surface_a, surface_b, a_to_b), kernel);
  return sum / static_cast<double>(samples.size());
}

double keypoint_loss(const KeypointSet& keypoints, const RigidTransform& transform) {
  keypoints.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    sum += (keypoints.q_a[i] - transform.apply(keypoints.q_b[i])).squaredNorm();
  }
  return sum;
}

double total_loss(double lambda, double match, double key) {
  if (lambda == 1.0) return key;
  if (lambda == 0.0) return match;
  return (1.0 - lambda) * match + lambda * key;
}

double total_loss(int t, const Schedule& schedule, double match, double key) {
  if (t < 0 || t > schedule.total_steps()) fail(ErrorCode::kOutOfRange, "step outside [0, T]");
  return total_loss(schedule.lambda(t), match, key);
}

ParamVector pack_params(const PoseParams& pose, const RobustKernelParams& kernel) {
  ParamVector p;
  p << pose.axis_angle, pose.translation, std::log(kernel.c), kernel.alpha;
  return p;
}

void unpack_params(const ParamVector& p, PoseParams& pose, RobustKernelParams& kernel) {
  pose.axis_angle = p.segment<3>(0);
  pose.translation = p.segment<3>(3);
  kernel.c = std::exp(p(6));
  kernel.alpha = p(7);
}

double keypoint_energy(const KeypointSet& keypoints, const PoseParams& pose,
                       Eigen::Matrix<double, 6, 1>* gradient) {
  keypoints.validate();
  const Mat3 R = so3_exp(pose.axis_angle);
  double sum = 0.0;
  Vec3 g_rot = Vec3::Zero();
  Vec3 g_t = Vec3::Zero();
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Vec3 e = R * keypoints.q_a[i] + pose.translation - keypoints.q_b[i];
    sum += e.squaredNorm();
    const Vec3 g = 2.0 * e;
    g_t += g;
    g_rot += keypoints.q_a[i].cross(R.transpose() * g);
  }
  if (gradient) {
    gradient->segment<3>(0) = so3_right_jacobian(pose.axis_angle).transpose() * g_rot;
    gradient->segment<3>(3) = g_t;
  }
  return sum;
}

ObjectiveValue evaluate_objective(std::span<const Vec3> samples, const SmoothedField& surface_a,
                                  const SmoothedField& surface_b, const KeypointSet& keypoints,
                                  const ParamVector& params, double lambda,
                                  std::span<const double> cached_a) {
  PoseParams pose;
  RobustKernelParams kernel;
  unpack_params(params, pose, kernel);
  ObjectiveValue out;
  Eigen::Matrix<double, 6, 1> key_grad;
  out.key = keypoint_energy(keypoints, pose, &key_grad);

  Vec3 acc_rot = Vec3::Zero();
  Vec3 acc_t = Vec3::Zero();
  double acc_c = 0.0;
  double acc_alpha = 0.0;
  if (lambda < 1.0) {
    if (samples.empty()) fail(ErrorCode::kEmptySampleSet, "matching loss over an empty sample set");
    const bool use_cache = cached_a.size() >= samples.size();
    const Mat3 R = so3_exp(pose.axis_angle);
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Vec3& x = samples[i];
      const double sa = use_cache ? cached_a[i] : surface_a.query(x);
      Vec3 grad_b;
      const double sb = surface_b.query_with_gradient(R * x + pose.translation, grad_b);
      const double diff = sa - sb;
      const KernelValue k = robust_kernel_eval(std::abs(diff), kernel);
      sum += k.value;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      const Vec3 g_y = (-sign * k.d_residual * inv_n) * grad_b;
      acc_t += g_y;
      acc_rot += x.cross(R.transpose() * g_y);
      acc_c += k.d_c;
      acc_alpha += k.d_alpha;
    }
    out.match = sum * inv_n;
    acc_c *= inv_n;
    acc_alpha *= inv_n;
    acc_rot = so3_right_jacobian(pose.axis_angle).transpose() * acc_rot;
  }
  const LogPartition lz = kernel_log_partition(kernel);
  out.log_partition = lz.value;
  out.total = total_loss(lambda, out.match, out.key);
  out.objective = total_loss(lambda, out.match + lz.value, out.key);

  const double wm = 1.0 - lambda;
  out.gradient.segment<3>(0) = wm * acc_rot + lambda * key_grad.segment<3>(0);
  out.gradient.segment<3>(3) = wm * acc_t + lambda * key_grad.segment<3>(3);
  out.gradient(6) = wm * (acc_c + lz.d_c) * kernel.c;
  out.gradient(7) = wm * (acc_alpha + lz.d_alpha);
  return out;
}

double gradient_check(const GradientFunction& fn, const Eigen::VectorXd& params) {
  Eigen::VectorXd analytic(params.size());
  const double f0 = fn(params, &analytic);
  if (!std::isfinite(f0)) fail(ErrorCode::kNonFiniteLoss, "gradient check at a non-finite loss");
  Eigen::VectorXd numeric(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double h = 1e-4 * std::max(1.0, std::abs(params(i)));
    Eigen::VectorXd hi = params;
    Eigen::VectorXd lo = params;
    hi(i) += h;
    lo(i) -= h;
    numeric(i) = (fn(hi, nullptr) - fn(lo, nullptr)) / (2.0 * h);
  }
  const double scale = std::max({numeric.lpNorm<Eigen::Infinity>(), analytic.lpNorm<Eigen::Infinity>(),
                                 std::numeric_limits<double>::min()});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

std::size_t nearest_level(std::span<const SmoothedField> levels, double sigma) {
  if (levels.empty()) fail(ErrorCode::kInvalidArgument, "no field levels");
  std::size_t best = 0;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (std::abs(levels[i].sigma() - sigma) < std::abs(levels[best].sigma() - sigma)) best = i;
  }
  return best;
}

RegistrationResult register_fields(const FieldPair& fields, const KeypointSet& keypoints,
                                   const RegistrationConfig& config,
                                   const RegistrationObserver& observer, int restart) {
  config.validate();
  keypoints.validate();
  if (fields.a.empty() || fields.a.size() != fields.b.size()) {
    fail(ErrorCode::kInvalidArgument, "scene fields must come in matching, non-empty level lists");
  }
  if (!(fields.radius_a > 0.0)) fail(ErrorCode::kInvalidArgument, "scene radius must be positive");

  double finest = 0.0;
  for (const SmoothedField& f : fields.a) {
    if (f.sigma() > 0.0 && (finest == 0.0 || f.sigma() < finest)) finest = f.sigma();
  }
  RegistrationResult result;
  result.sigmas = plan_sigmas(config, keypoints, finest);
  const Schedule schedule(config.total_steps, result.sigmas.start, result.sigmas.end);
  const double fixed_sigma = std::sqrt(result.sigmas.start * result.sigmas.end);

  ParamVector p = pack_params(config.initial_pose, {config.kernel_c, config.kernel_alpha});
  ParamVector m = ParamVector::Zero();
  ParamVector v = ParamVector::Zero();
  ParamVector lr;
  lr << Vec3::Constant(config.lr_rotation), Vec3::Constant(config.lr_translation),
      config.lr_kernel, config.lr_kernel;
  long adam_t = 0;
  const double log_c_min = std::log(config.c_min);
  const double log_c_max = std::log(config.c_max);
  auto adam_step = [&](const ParamVector& g, int count) {
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    ++adam_t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
    for (int i = 0; i < count; ++i) p(i) -= lr(i) * (m(i) / c1) / (std::sqrt(v(i) / c2) + eps);
    p(6) = std::clamp(p(6), log_c_min, log_c_max);
    p(7) = std::clamp(p(7), config.alpha_min, config.alpha_max);
  };

  auto make_record = [&](const char* phase, int step, double lambda, double sigma,
                         const ObjectiveValue& ov, std::size_t n, bool capped) {
    TraceRecord rec;
    rec.restart = restart;
    rec.phase = phase;
    rec.step = step;
    rec.lambda = lambda;
    rec.sigma = sigma;
    rec.loss_total = ov.total;
    rec.loss_match = ov.match;
    rec.loss_key = ov.key;
    rec.objective = ov.objective;
    RobustKernelParams k;
    unpack_params(p, rec.pose, k);
    rec.c = k.c;
    rec.alpha = k.alpha;
    rec.n_samples = n;
    rec.sample_cap_hit = capped;
    return rec;
  };
  auto abort_non_finite = [&](const std::string& where) {
    throw NonFiniteLossError("non-finite loss or gradient at " + where, result.trace);
  };

  ActiveSampleSet samples = ActiveSampleSet::bootstrap(
      keypoints.q_a, config.rho_ratio * fields.radius_a, fields.radius_a, config.seed, config.max_samples);

  for (int w = 0; w < config.warmup_steps; ++w) {
    PoseParams pose;
    RobustKernelParams kernel;
    unpack_params(p, pose, kernel);
    ObjectiveValue ov;
    Eigen::Matrix<double, 6, 1> g6;
    ov.key = keypoint_energy(keypoints, pose, &g6);
    ov.total = ov.key;
    ov.objective = ov.key;
    ov.gradient.head<6>() = g6;
    result.trace.push_back(make_record("warmup", w, 1.0, schedule.sigma(0), ov, samples.size(), false));
    if (!all_finite(ov)) abort_non_finite("warmup step " + std::to_string(w));
    if (observer) observer(result.trace.back(), samples);
    adam_step(ov.gradient, 6);
  }

  std::vector<double> cache_a;
  std::size_t cache_level = std::numeric_limits<std::size_t>::max();
  auto lambda_at = [&](int t) {
    if (config.lambda_override) return *config.lambda_override;
    if (config.ablation.no_lambda_annealing) return 0.0;
    return schedule.lambda(t);
  };
  auto sigma_at = [&](int t) { return config.ablation.fixed_sigma ? fixed_sigma : schedule.sigma(t); };
  auto evaluate_at = [&](std::size_t level, double lambda) {
    if (level != cache_level) {
      cache_a.clear();
      cache_level = level;
    }
    const auto& pts = samples.points();
    while (cache_a.size() < pts.size()) cache_a.push_back(fields.a[level].query(pts[cache_a.size()]));
    return evaluate_objective(pts, fields.a[level], fields.b[level], keypoints, p, lambda, cache_a);
  };

  for (int t = 0; t < config.total_steps; ++t) {
    const double lambda = lambda_at(t);
    const double sigma = sigma_at(t);
    const std::size_t level = nearest_level(fields.a, sigma);
    if (t % config.sampler_interval == 0) {
      PoseParams pose;
      RobustKernelParams kernel;
      unpack_params(p, pose, kernel);
      if (config.ablation.uniform_sampling) {
        samples.resample_uniform(config.uniform_samples);
        cache_a.clear();
      } else {
        samples.update(fields.a[level], fields.b[level], pose.to_transform(), kernel.c, level);
      }
    }
    const ObjectiveValue ov = evaluate_at(level, lambda);
    result.trace.push_back(make_record("registering", t, lambda, sigma, ov, samples.size(), samples.capped()));
    if (!all_finite(ov)) abort_non_finite("step " + std::to_string(t));
    if (observer) observer(result.trace.back(), samples);
    adam_step(ov.gradient, 8);
  }

  const int T = config.total_steps;
  const double lambda = lambda_at(T);
  const double sigma = sigma_at(T);
  const ObjectiveValue final_value = evaluate_at(nearest_level(fields.a, sigma), lambda);
  result.trace.push_back(make_record("final", T, lambda, sigma, final_value, samples.size(), samples.capped()));
  if (!all_finite(final_value)) abort_non_finite("final evaluation");
  if (observer) observer(result.trace.back(), samples);

  unpack_params(p, result.pose, result.kernel);
  result.transform = result.pose.to_transform();
  result.final_loss = final_value.objective;
  result.samples = std::move(samples);
  return result;
}

MultiStartResult register_best_of(const FieldPair& fields, const KeypointSet& keypoints,
                                  const RegistrationConfig& config, int restarts,
                                  const RegistrationObserver& observer) {
  if (restarts < 1) fail(ErrorCode::kInvalidArgument, "restarts must be >= 1");
  MultiStartResult out;
  std::optional<NonFiniteLossError> last_error;
  bool have_best = false;
  for (int i = 0; i < restarts; ++i) {
    RegistrationConfig cfg = config;
    cfg.seed = config.seed + static_cast<std::uint64_t>(i);
    try {
      RegistrationResult r = register_fields(fields, keypoints, cfg, observer, i);
      out.final_losses.emplace_back(r.final_loss);
      out.traces.push_back(r.trace);
      if (!have_best || r.final_loss < out.best.final_loss) {
        out.chosen_restart = i;
        out.best = std::move(r);
        have_best = true;
      }
    } catch (const NonFiniteLossError& e) {
      out.final_losses.emplace_back(std::nullopt);
      out.traces.push_back(e.trace());
      last_error.emplace(e);
    }
  }
  if (!have_best) throw *last_error;
  return out;
}

}  // namespace fieldreg
