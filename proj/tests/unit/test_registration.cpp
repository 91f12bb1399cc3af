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


#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "fieldreg/eval.hpp"
#include "fieldreg/fields.hpp"
#include "fieldreg/registration.hpp"
#include "fixtures.hpp"

using namespace fieldreg;

namespace {

SmoothedField constant_field(float value) { return SmoothedField(0.0, Grid3::cube(1.0, 5, value)); }

// Gaussian-smoothed ball of radius 0.3 centred at c.
SmoothedField smooth_ball(const Vec3& c, double sigma, int res = 49) {
  Grid3 g = Grid3::cube(1.0, res);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = (g.node(i) - c).norm() < 0.3 ? 1.0f : 0.0f;
  return distill_grid(g, {sigma})[0];
}

KeypointSet triangle_keypoints() {
  KeypointSet q;
  q.q_a = {Vec3(0.1, 0.2, -0.1), Vec3(-0.3, 0.1, 0.2), Vec3(0.25, -0.2, 0.3), Vec3(0.0, 0.3, 0.1)};
  const RigidTransform T = RigidTransform::from_axis_angle(Vec3(0.2, -0.1, 0.3), Vec3(0.05, 0.1, -0.02));
  for (const Vec3& p : q.q_a) q.q_b.push_back(T.apply(p));
  return q;
}

}  // namespace

TEST_CASE("robust kernel examples") {
  for (double alpha : {-10.0, -2.0, 0.0, 1.0, 2.0}) {
    CHECK(robust_kernel(0.0, {0.4, alpha}) == 0.0);
  }
  CHECK(robust_kernel(0.3, {0.3, 2.0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(robust_kernel(0.6, {0.3, 2.0}) == doctest::Approx(2.0).epsilon(1e-15));
  // general form at alpha = -2, r = c: -2 * ((1/4 + 1)^-1 - 1) = 0.4
  CHECK(robust_kernel(0.3, {0.3, -2.0}) == doctest::Approx(0.4).epsilon(1e-14));
  // alpha = 1: sqrt(z + 1) - 1
  CHECK(robust_kernel(0.6, {0.3, 1.0}) == doctest::Approx(std::sqrt(5.0) - 1.0).epsilon(1e-14));
  // alpha = 0: log(z / 2 + 1)
  CHECK(robust_kernel(0.6, {0.3, 0.0}) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  CHECK_THROWS_AS(robust_kernel(0.1, {0.0, 1.0}), Error);
  CHECK_THROWS_AS(robust_kernel(-0.1, {0.3, 1.0}), Error);
}

TEST_CASE("robust kernel is continuous across its special cases") {
  for (double r : {0.05, 0.3, 0.9}) {
    for (double a0 : {0.0, 2.0}) {
      const double center = robust_kernel(r, {0.3, a0});
      for (double eps : {1e-7, 1e-5, 1e-3}) {
        CHECK(std::abs(robust_kernel(r, {0.3, a0 + eps}) - center) < 100.0 * eps);
        CHECK(std::abs(robust_kernel(r, {0.3, a0 - eps}) - center) < 100.0 * eps);
      }
    }
  }
}

TEST_CASE("robust kernel derivatives") {
  const double h = 1e-6;
  for (double alpha : {-6.0, -1.0, 0.0, 0.7, 2.0}) {
    for (double r : {0.02, 0.25, 0.8}) {
      const RobustKernelParams p{0.2, alpha};
      const KernelValue k = robust_kernel_eval(r, p);
      const double dr = (robust_kernel(r + h, p) - robust_kernel(r - h, p)) / (2 * h);
      const double dc = (robust_kernel(r, {0.2 + h, alpha}) - robust_kernel(r, {0.2 - h, alpha})) / (2 * h);
      CHECK(k.d_residual == doctest::Approx(dr).epsilon(1e-6));
      CHECK(k.d_c == doctest::Approx(dc).epsilon(1e-6));
      if (alpha != 0.0 && alpha != 2.0) {
        const double da = (robust_kernel(r, {0.2, alpha + h}) - robust_kernel(r, {0.2, alpha - h})) / (2 * h);
        CHECK(k.d_alpha == doctest::Approx(da).epsilon(1e-5));
      } else if (alpha == 0.0) {
        const double e = 1e-3;
        const double da = (robust_kernel(r, {0.2, alpha + e}) - robust_kernel(r, {0.2, alpha - e})) / (2 * e);
        CHECK(k.d_alpha == doctest::Approx(da).epsilon(1e-2));
      } else {
        // d/dalpha diverges like log|alpha - 2|; the slope is taken just
        // below 2
        const double probe = 2.0 - 1e-4;
        const double e = 1e-7;
        const double da = (robust_kernel(r, {0.2, probe + e}) - robust_kernel(r, {0.2, probe - e})) / (2 * e);
        CHECK(k.d_alpha == doctest::Approx(da).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("kernel log partition") {
  // alpha = 2: Z = c sqrt(pi/2) erf(1 / (c sqrt 2))
  for (double c : {1e-3, 0.05, 0.3, 4.0}) {
    const double z = c * std::sqrt(std::numbers::pi / 2.0) * std::erf(1.0 / (c * std::sqrt(2.0)));
    CHECK(kernel_log_partition({c, 2.0}).value == doctest::Approx(std::log(z)).epsilon(1e-10));
  }
  const double h = 1e-6;
  for (double alpha : {-8.0, -1.5, 0.5, 1.5}) {
    for (double c : {0.01, 0.2, 2.0}) {
      const LogPartition lz = kernel_log_partition({c, alpha});
      const double dc = (kernel_log_partition({c + h * c, alpha}).value -
                         kernel_log_partition({c - h * c, alpha}).value) / (2 * h * c);
      const double da = (kernel_log_partition({c, alpha + h}).value -
                         kernel_log_partition({c, alpha - h}).value) / (2 * h);
      CHECK(lz.d_c == doctest::Approx(dc).epsilon(1e-5));
      CHECK(lz.d_alpha == doctest::Approx(da).epsilon(1e-5));
    }
  }
}

TEST_CASE("schedule") {
  const Schedule s(10000, 0.2, 0.1);
  CHECK(s.lambda(0) == 1.0);
  CHECK(s.lambda(5000) == 0.5);
  CHECK(s.lambda(10000) == 0.0);
  CHECK(s.sigma(0) == 0.2);
  CHECK(s.sigma(10000) == 0.1);
  CHECK(s.sigma(5000) == doctest::Approx(0.15).epsilon(1e-15));
  for (int t = 1; t <= 10000; t += 37) CHECK(s.lambda(t) <= s.lambda(t - 1));
  CHECK_THROWS_AS(Schedule(0, 0.2, 0.1), Error);
  CHECK_THROWS_AS(Schedule(10, -0.2, 0.1), Error);
}

TEST_CASE("total_loss endpoints") {
  const Schedule s(10000, 0.2, 0.1);
  const double match = 0.123456789;
  const double key = 9.87654321;
  CHECK(total_loss(0, s, match, key) == key);
  CHECK(total_loss(10000, s, match, key) == match);
  CHECK(total_loss(5000, s, match, key) == 0.5 * match + 0.5 * key);
  try {
    total_loss(10001, s, match, key);
    FAIL("step past T accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kOutOfRange);
  }
  CHECK_THROWS_AS(total_loss(-1, s, match, key), Error);
}

TEST_CASE("keypoint_loss") {
  KeypointSet q;
  q.q_a = {Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(1, 0, 1)};
  q.q_b = {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  CHECK(keypoint_loss(q, RigidTransform::identity()) == 3.0);

  const KeypointSet tri = triangle_keypoints();
  const RigidTransform T = closed_form_alignment(tri.q_a, tri.q_b);
  CHECK(keypoint_loss(tri, T) < 1e-20);

  KeypointSet permuted = tri;
  std::swap(permuted.q_a[0], permuted.q_a[2]);
  std::swap(permuted.q_b[0], permuted.q_b[2]);
  const RigidTransform U = RigidTransform::from_axis_angle(Vec3(0.1, 0, 0.2), Vec3(0.3, 0, 0));
  CHECK(keypoint_loss(permuted, U) == doctest::Approx(keypoint_loss(tri, U)).epsilon(1e-14));

  // energy of the A -> B pose is the loss of its inverse
  const PoseParams pose{Vec3(0.3, -0.2, 0.5), Vec3(0.1, 0.2, -0.3)};
  CHECK(keypoint_energy(tri, pose) ==
        doctest::Approx(keypoint_loss(tri, pose.to_transform().inverse())).epsilon(1e-12));

  KeypointSet bad = tri;
  bad.q_b.pop_back();
  try {
    keypoint_loss(bad, U);
    FAIL("mismatched lists accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kKeypointMismatch);
  }
  bad.q_a.resize(2);
  bad.q_b.resize(2);
  CHECK_THROWS_AS(keypoint_loss(bad, U), Error);
}

TEST_CASE("residual and matching_loss") {
  const double sigma = 0.08;
  const Vec3 shift(0.1, -0.05, 0.0);
  const SmoothedField a = smooth_ball(Vec3::Zero(), sigma);
  const SmoothedField b = smooth_ball(shift, sigma);
  const RigidTransform T = RigidTransform::from_translation(shift);

  for (const Vec3& x : {Vec3(0.3, 0, 0), Vec3(0, 0.25, 0.1), Vec3(-0.1, -0.2, 0.2)}) {
    CHECK(residual(x, a, b, T) < 0.05);
  }
  CHECK(residual(Vec3(0.9, 0.0, 0.0), a, b, T) == 0.0);
  const Vec3 on_surface(0.3, 0, 0);
  const RigidTransform far = RigidTransform::from_translation(Vec3(0.6, 0, 0));
  CHECK(residual(on_surface, a, b, far) == doctest::Approx(a.query(on_surface)).epsilon(1e-6));

  const std::vector<Vec3> pts{Vec3(0.1, 0, 0), Vec3(0.9, 0, 0)};
  CHECK(matching_loss(pts, a, a, RigidTransform::identity(), {0.3, 1.0}) == 0.0);

  const SmoothedField hi = constant_field(0.75f);
  const SmoothedField lo = constant_field(0.5f);
  const std::vector<Vec3> one{Vec3(0.1, 0.2, 0.3)};
  CHECK(matching_loss(one, hi, lo, RigidTransform::identity(), {0.25, 2.0}) == doctest::Approx(0.5));

  const std::vector<Vec3> set{Vec3(0.25, 0, 0), Vec3(0.3, 0.1, 0), Vec3(0, 0.32, 0)};
  std::vector<Vec3> doubled = set;
  doubled.insert(doubled.end(), set.begin(), set.end());
  CHECK(matching_loss(doubled, a, b, far, {0.2, -1.0}) ==
        doctest::Approx(matching_loss(set, a, b, far, {0.2, -1.0})).epsilon(1e-14));

  try {
    matching_loss({}, a, b, T, {0.2, 1.0});
    FAIL("empty set accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptySampleSet);
  }
}

TEST_CASE("gradient checks") {
  const KeypointSet tri = triangle_keypoints();
  const GradientFunction key = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const PoseParams pose{x.segment<3>(0), x.segment<3>(3)};
    if (g) {
      Eigen::Matrix<double, 6, 1> g6;
      keypoint_energy(tri, pose, &g6);
      *g = g6;
    }
    return keypoint_loss(tri, pose.to_transform().inverse());
  };
  Eigen::VectorXd x0(6);
  x0 << 0.4, -0.3, 0.2, 0.1, 0.05, -0.2;
  CHECK(gradient_check(key, x0) < 1e-5);

  const double sigma = 0.1;
  const SmoothedField a = smooth_ball(Vec3::Zero(), sigma, 65);
  const SmoothedField b = smooth_ball(Vec3(0.05, 0.02, -0.03), sigma, 65);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.45, 0.45);
  std::vector<Vec3> samples;
  while (samples.size() < 3000) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (a.query(p) > 0.05 && a.query(p) < 0.95) samples.push_back(p);
  }
  for (double lambda : {0.0, 0.5, 0.9}) {
    const GradientFunction full = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      const ObjectiveValue ov = evaluate_objective(samples, a, b, tri, x, lambda);
      if (g) *g = ov.gradient.head<6>();
      return ov.total;
    };
    const GradientFunction kernel = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      const ObjectiveValue ov = evaluate_objective(samples, a, b, tri, x, lambda);
      if (g) *g = ov.gradient.tail<2>();
      return ov.objective;
    };
    ParamVector p = pack_params({Vec3(0.02, -0.03, 0.01), Vec3(0.03, 0.0, -0.02)}, {0.2, 0.5});
    CHECK(gradient_check(full, p) < 5e-2);
    // kernel part of the gradient only moves log c and alpha
    const GradientFunction kernel_only = [&](const Eigen::VectorXd& k, Eigen::VectorXd* g) {
      ParamVector q = p;
      q.tail<2>() = k;
      Eigen::VectorXd g8;
      const double v = kernel(q, g ? &g8 : nullptr);
      if (g) *g = g8;
      return v;
    };
    if (lambda < 1.0) CHECK(gradient_check(kernel_only, p.tail<2>()) < 1e-4);
  }

  // stationary at the optimum of a self-registration
  const ObjectiveValue at_opt =
      evaluate_objective(samples, a, a, [] {
        KeypointSet q;
        q.q_a = {Vec3(0.1, 0, 0), Vec3(0, 0.2, 0), Vec3(0, 0, 0.3)};
        q.q_b = q.q_a;
        return q;
      }(), pack_params({}, {0.2, 1.0}), 0.5);
  CHECK(at_opt.gradient.head<6>().norm() < 1e-4);
}

TEST_CASE("sigma planning") {
  KeypointSet q;
  q.q_a = {Vec3(0, 0, 0), Vec3(0.4, 0, 0), Vec3(0, 0.3, 0)};
  q.q_b = {Vec3(0, 0, 0), Vec3(0.2, 0, 0), Vec3(0, 0.1, 0)};
  CHECK(q.extent() == doctest::Approx(0.5 * (0.5 + std::sqrt(0.05))));

  RegistrationConfig cfg;
  const double d = q.extent();
  const SigmaPlan plan = plan_sigmas(cfg, q, 0.01);
  CHECK(plan.start == doctest::Approx(0.2 * d));
  CHECK(plan.end == doctest::Approx(0.1 * d));
  REQUIRE(plan.levels.size() == 5);
  CHECK(plan.levels.front() == plan.end);
  CHECK(plan.levels.back() == plan.start);
  for (std::size_t i = 1; i + 1 < plan.levels.size(); ++i) {
    CHECK(plan.levels[i] * plan.levels[i] ==
          doctest::Approx(plan.levels[i - 1] * plan.levels[i + 1]).epsilon(1e-12));
  }

  const RegistrationConfig partial = RegistrationConfig::partial_object();
  const SigmaPlan fine = plan_sigmas(partial, q, 0.01);
  CHECK(fine.start == doctest::Approx(0.1 * d));
  CHECK(fine.end == 0.01);

  std::vector<SmoothedField> levels;
  for (double s : {0.0, 0.02, 0.04, 0.08}) levels.emplace_back(s, Grid3::cube(1.0, 3));
  CHECK(nearest_level(levels, 0.0) == 0);
  CHECK(nearest_level(levels, 0.035) == 2);
  CHECK(nearest_level(levels, 1.0) == 3);
}

TEST_CASE("config validation") {
  RegistrationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda_override = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.lr_rotation = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.kernel_alpha = 3.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("register_fields on identical scenes") {
  using namespace fieldreg::testing;
  const AnalyticShape object = asymmetric_object();
  const DensityScene scene(object, 1.0, ring_cameras());
  SurfaceFieldOptions opts;
  opts.resolution = 64;
  const Grid3 surface = threshold(extract_surface_field(scene, opts));

  const auto surf = object.sample_surface(400, 7);
  KeypointSet q;
  for (int i : {0, 100, 200, 300}) q.q_a.push_back(surf[i]);
  q.q_b = q.q_a;

  RegistrationConfig cfg;
  cfg.total_steps = 1500;
  cfg.warmup_steps = 400;
  cfg.initial_pose = {Vec3(0.4, -0.3, 0.2), Vec3(0.15, 0.1, -0.1)};
  const SigmaPlan plan = plan_sigmas(cfg, q, surface.min_spacing());
  const auto levels = distill_grid(surface, plan.levels);
  const FieldPair pair{levels, levels, 1.0};

  std::vector<std::string> phases;
  int last_step = -1;
  const RegistrationObserver watch = [&](const TraceRecord& r, const ActiveSampleSet&) {
    if (phases.empty() || phases.back() != r.phase) {
      phases.push_back(r.phase);
      last_step = -1;
    }
    CHECK(r.step > last_step);
    last_step = r.step;
  };
  const RegistrationResult r = register_fields(pair, q, cfg, watch);
  CHECK(phases == std::vector<std::string>{"warmup", "registering", "final"});
  CHECK(r.trace.size() == 400u + 1500u + 1u);
  const PoseError e = pose_error(r.transform, RigidTransform::identity());
  CHECK(e.delta_R <= 0.5);
  CHECK(e.delta_t <= 0.005);

  // same seed, same run
  const RegistrationResult again = register_fields(pair, q, cfg);
  CHECK(again.transform.matrix() == r.transform.matrix());
  CHECK(again.samples.points() == r.samples.points());
}

TEST_CASE("non-finite loss aborts with the trace") {
  KeypointSet q = triangle_keypoints();
  Grid3 bad = Grid3::cube(1.0, 9, 0.5f);
  bad.values.assign(bad.size(), std::numeric_limits<float>::quiet_NaN());
  const std::vector<SmoothedField> a{SmoothedField(0.0, Grid3::cube(1.0, 9, 0.5f))};
  const std::vector<SmoothedField> b{SmoothedField(0.0, bad)};
  RegistrationConfig cfg;
  cfg.total_steps = 50;
  cfg.warmup_steps = 5;
  try {
    register_best_of({a, b, 1.0}, q, cfg, 2);
    FAIL("NaN field accepted");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
    // lambda(0) = 1 leaves the match term out, so the first registering
    // step is still finite
    REQUIRE(e.trace().size() == 7);
    CHECK(std::isfinite(e.trace()[5].loss_total));
    CHECK(std::isnan(e.trace()[6].loss_total));
    CHECK(e.trace().back().phase == "registering");
    CHECK(e.trace().back().restart == 1);
  }
}
