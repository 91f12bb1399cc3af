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


// End-to-end checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fieldreg/distill.hpp"
#include "fieldreg/eval.hpp"
#include "fieldreg/fields.hpp"
#include "fieldreg/pipeline.hpp"
#include "fieldreg/registration.hpp"
#include "fieldreg/sampler.hpp"
#include "fixtures.hpp"

using namespace fieldreg;
using fieldreg::testing::PairFixture;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

void note(Outcome& o, bool ok, const std::string& what) {
  if (!ok) o.pass = false;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += (ok ? "" : "!") + what;
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

constexpr int kResolution = 128;
constexpr double kVoxel = 2.0 / (kResolution - 1);

struct Distilled {
  DistilledFields a;
  DistilledFields b;
  SigmaPlan plan;
  FieldPair pair() const { return {a.levels, b.levels, 1.0}; }
};

Distilled distill_pair(const PairFixture& fx, const RegistrationConfig& config, int resolution) {
  Distilled d;
  d.plan = plan_sigmas(config, fx.keypoints, 2.0 / (resolution - 1));
  DistillRequest req;
  req.resolution = resolution;
  req.sigmas = d.plan.levels;
  d.a = distill_scene(fx.a, req);
  d.b = distill_scene(fx.b, req);
  return d;
}

RigidTransform keypoint_only(const KeypointSet& q) { return closed_form_alignment(q.q_a, q.q_b).inverse(); }

// Surface likelihood at grid nodes of a slab against its closed form.
Outcome criterion_slab() {
  Outcome o;
  const double tau = 5.0;
  const double delta = 0.05;
  const DensityScene scene = testing::slab_scene(tau);
  const auto start = Clock::now();
  SurfaceFieldOptions opts;
  opts.resolution = 33;
  opts.delta = delta;
  opts.step = 1.0 / 4096;
  const SurfaceFieldGrid grid = extract_surface_field(scene, opts);
  const double elapsed = seconds_since(start);

  const Vec3 eye(0, 0, 2);
  double worst = 0.0;
  // Nodes sit on multiples of 1/16; the slab's top face is at z = 0.3.
  for (const Vec3& x : {Vec3(0, 0, 0.1875), Vec3(0.25, -0.125, 0.1875), Vec3(-0.5, 0.375, 0.125),
                        Vec3(0.0625, 0.0625, 0.0)}) {
    const Vec3 d = x - eye;
    const double inside = (0.3 - x.z()) * d.norm() / std::abs(d.z());
    const double expected = std::exp(-tau * (inside - delta)) * (1.0 - std::exp(-2.0 * tau * delta));
    worst = std::max(worst, std::abs(grid.values.nearest(x) - expected));
  }
  note(o, worst <= 1e-3, fmt("max |S - closed form| = %.2e", worst));
  note(o, elapsed < 10.0, fmt("%.1f s", elapsed));
  return o;
}

// Same density, different emission: identical fields and losses.
Outcome criterion_emission() {
  Outcome o;
  const AnalyticShape lit = testing::asymmetric_object();
  const DensityScene a(lit, 1.0, testing::ring_cameras(), true);
  const DensityScene b(lit.recolored(Vec3(0.9, 0.1, 0.05)), 1.0, testing::ring_cameras(), true);
  const DensityScene c(lit, 1.0, testing::ring_cameras(), false);
  SurfaceFieldOptions opts;
  opts.resolution = 48;
  const auto ga = extract_surface_field(a, opts);
  const auto gb = extract_surface_field(b, opts);
  const auto gc = extract_surface_field(c, opts);
  const auto bytes = ga.values.values.size() * sizeof(float);
  const bool same = std::memcmp(ga.values.values.data(), gb.values.values.data(), bytes) == 0 &&
                    std::memcmp(ga.values.values.data(), gc.values.values.data(), bytes) == 0;
  note(o, same, "surface grids byte-identical");

  const auto sa = distill_grid(threshold(ga), {0.05});
  const auto sb = distill_grid(threshold(gb), {0.05});
  const auto sc = distill_grid(threshold(gc), {0.05});
  const auto samples = lit.sample_surface(500, 4);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.2);
  bool losses_equal = true;
  for (int i = 0; i < 20; ++i) {
    const RigidTransform T = RigidTransform::from_axis_angle(Vec3(n(rng), n(rng), n(rng)), 0.3 * Vec3(n(rng), n(rng), n(rng)));
    const RobustKernelParams k{0.3, -1.0};
    const double la = matching_loss(samples, sa[0], sa[0], T, k);
    losses_equal = losses_equal && la == matching_loss(samples, sb[0], sb[0], T, k) &&
                   la == matching_loss(samples, sa[0], sc[0], T, k);
  }
  note(o, losses_equal, "matching_loss identical over 20 poses");
  return o;
}

struct SelfRun {
  PairFixture fx;
  Distilled fields;
  MultiStartResult result;
  double distill_seconds = 0.0;
  double register_seconds = 0.0;
};

Outcome criterion_self_registration(const SelfRun& run) {
  Outcome o;
  const PoseError ours = pose_error(run.result.best.transform, run.fx.truth);
  const PoseError kp = pose_error(keypoint_only(run.fx.keypoints), run.fx.truth);
  note(o, ours.delta_R <= 2.0, fmt("dR %.3f deg (kp %.3f)", ours.delta_R, kp.delta_R));
  note(o, ours.delta_t <= 1e-2, fmt("dt %.5f (kp %.5f)", ours.delta_t, kp.delta_t));
  note(o, ours.delta_R < kp.delta_R && ours.delta_t < kp.delta_t, "better than keypoints alone");
  const double total = run.distill_seconds + run.register_seconds;
  note(o, total <= 600.0, fmt("distill %.0f s + best-of-10 %.0f s", run.distill_seconds, run.register_seconds));
  return o;
}

// Pose after optimizing only the keypoint term vs the closed form.
Outcome criterion_keypoint_oracle() {
  Outcome o;
  const PairFixture fx = testing::self_registration_fixture();
  RegistrationConfig config;
  config.lambda_override = 1.0;
  config.warmup_steps = 2000;
  config.total_steps = 4000;
  const Distilled d = distill_pair(fx, config, 48);
  const RegistrationResult r = register_fields(d.pair(), fx.keypoints, config);
  const PoseParams oracle = PoseParams::from_transform(keypoint_only(fx.keypoints));
  const double rot = (r.pose.axis_angle - oracle.axis_angle).lpNorm<Eigen::Infinity>();
  const double trans = (r.pose.translation - oracle.translation).lpNorm<Eigen::Infinity>();
  note(o, std::max(rot, trans) <= 1e-3, fmt("max component gap rot %.2e trans %.2e", rot, trans));
  return o;
}

Outcome criterion_schedule() {
  Outcome o;
  bool exact = true;
  for (int T : {2, 100, 10000, 123456}) {
    const Schedule s(T, 0.2, 0.1);
    exact = exact && s.lambda(0) == 1.0 && s.lambda(T / 2) == 0.5 && s.lambda(T) == 0.0;
    exact = exact && s.sigma(0) == 0.2 && s.sigma(T) == 0.1;
    exact = exact && total_loss(0, s, 3.0, 7.0) == 7.0 && total_loss(T, s, 3.0, 7.0) == 3.0;
  }
  note(o, exact, "lambda 1, 0.5, 0 at t = 0, T/2, T");
  return o;
}

Outcome criterion_sampler(const SelfRun& run, const std::vector<std::pair<ActiveSampleSet, const Distilled*>>& more) {
  Outcome o;
  std::size_t checked = 0;
  std::size_t failed = 0;
  bool monotone = true;
  auto add = [&](const ActiveSampleSet& set, const Distilled& d) {
    const SamplerAudit a = audit(set, d.a.levels, d.b.levels);
    checked += a.checked;
    failed += a.failed;
    monotone = monotone && a.monotone;
  };
  add(run.result.best.samples, run.fields);
  for (const auto& [set, d] : more) add(set, *d);
  note(o, failed == 0 && checked > 0, std::to_string(checked - failed) + "/" + std::to_string(checked) + " pass audit");
  note(o, monotone, "sizes monotone");

  const AnalyticShape object = testing::asymmetric_object();
  const auto& pts = run.result.best.samples.points();
  std::size_t near = 0;
  for (const Vec3& x : pts) near += std::abs(object.signed_distance(x)) <= 2.0 * run.fields.plan.end;
  const double frac = pts.empty() ? 0.0 : static_cast<double>(near) / pts.size();
  note(o, frac >= 0.9, fmt("%.3f of %.0f samples within 2 sigma_T", frac, static_cast<double>(pts.size())));
  return o;
}

Outcome criterion_gradients(const SelfRun& run) {
  Outcome o;
  const KeypointSet& q = run.fx.keypoints;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 0.05);
  double worst_key = 0.0;
  double worst_total = 0.0;
  const PoseParams truth = PoseParams::from_transform(run.fx.truth);
  const auto& levels_a = run.fields.a.levels;
  const auto& levels_b = run.fields.b.levels;
  const auto samples = testing::asymmetric_object().sample_surface(3000, 8);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x0(6);
    x0 << truth.axis_angle + Vec3(n(rng), n(rng), n(rng)), truth.translation + Vec3(n(rng), n(rng), n(rng));
    const GradientFunction key = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      const PoseParams pose{x.segment<3>(0), x.segment<3>(3)};
      Eigen::Matrix<double, 6, 1> g6;
      const double e = keypoint_energy(q, pose, g ? &g6 : nullptr);
      if (g) *g = g6;
      return e;
    };
    worst_key = std::max(worst_key, gradient_check(key, x0));

    const std::size_t level = static_cast<std::size_t>(trial) % levels_a.size();
    for (double lambda : {0.0, 0.5, 0.9}) {
      const GradientFunction total = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        const ParamVector p = pack_params({x.segment<3>(0), x.segment<3>(3)}, {0.3, 0.5});
        const ObjectiveValue ov = evaluate_objective(samples, levels_a[level], levels_b[level], q, p, lambda);
        if (g) *g = ov.gradient.head<6>();
        return ov.total;
      };
      worst_total = std::max(worst_total, gradient_check(total, x0));
    }
  }
  note(o, worst_key < 1e-5, fmt("keypoint %.2e", worst_key));
  note(o, worst_total < 5e-2, fmt("total %.2e", worst_total));
  return o;
}

struct TwinRuns {
  double mh = 0.0;
  double uniform = 0.0;
  std::vector<std::pair<ActiveSampleSet, const Distilled*>> mh_sets;
};

Outcome criterion_ablation(const TwinRuns& t) {
  Outcome o;
  note(o, t.uniform >= 2.0 * t.mh, fmt("mean 3D-ADD uniform %.4f vs default %.4f", t.uniform, t.mh));
  return o;
}

Outcome criterion_metrics() {
  Outcome o;
  const RigidTransform gt = RigidTransform::from_axis_angle(Vec3(0.2, 0.1, -0.3), Vec3(0.1, 0.2, 0.3));
  const PoseError same = pose_error(gt, gt);
  note(o, same.delta_t == 0.0 && same.delta_R < 1e-12, "identity gives (0, 0)");

  const RigidTransform moved(gt.rotation(), gt.translation() + Vec3(0.03, 0, 0));
  const PoseError e1 = pose_error(moved, gt);
  note(o, std::abs(e1.delta_t - 0.03 / std::sqrt(3.0)) < 1e-15 && e1.delta_R < 1e-12, "translation 0.03 gives 0.03/sqrt(3)");

  const RigidTransform rz(Eigen::AngleAxisd(10.0 * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero());
  const PoseError e2 = pose_error(rz, RigidTransform::identity());
  note(o, std::abs(e2.delta_R - 10.0 / std::sqrt(3.0)) < 1e-12 && e2.delta_t == 0.0, "10 deg about z gives 10/sqrt(3)");

  std::vector<Vec3> mesh;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 300; ++i) mesh.emplace_back(u(rng), 0.5 * u(rng), 0.2 * u(rng));
  note(o, add3d(mesh, gt, gt) == 0.0, "add3d identity 0");
  const Vec3 v(0.02, -0.01, 0.05);
  const RigidTransform shifted(gt.rotation(), gt.translation() + v);
  note(o, std::abs(add3d(mesh, shifted, gt) - v.norm() / diameter(mesh)) < 1e-15, "add3d translation |v|/diameter");

  const std::vector<Vec3> segment{Vec3(-0.5, 0, 0), Vec3(0.5, 0, 0)};
  const RigidTransform flip(Eigen::AngleAxisd(M_PI, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero());
  note(o, std::abs(add3d(segment, flip, RigidTransform::identity()) - 1.0) < 1e-15, "segment flip gives 1");
  return o;
}

}  // namespace

int main() {
  const auto start = Clock::now();
  std::vector<Outcome> results(9);
  auto progress = [&](const char* what) { std::fprintf(stderr, "[%6.0f s] %s\n", seconds_since(start), what); };

  results[0] = criterion_slab();
  results[1] = criterion_emission();
  progress("surface field checks done");

  SelfRun self{testing::self_registration_fixture(), {}, {}, 0.0, 0.0};
  const RegistrationConfig defaults;
  auto t0 = Clock::now();
  self.fields = distill_pair(self.fx, defaults, kResolution);
  self.distill_seconds = seconds_since(t0);
  t0 = Clock::now();
  self.result = register_best_of(self.fields.pair(), self.fx.keypoints, defaults, 10);
  self.register_seconds = seconds_since(t0);
  results[2] = criterion_self_registration(self);
  progress("self-registration done");

  results[3] = criterion_keypoint_oracle();
  results[4] = criterion_schedule();
  results[6] = criterion_gradients(self);
  progress("keypoint oracle, schedule and gradients done");

  const PairFixture twin = testing::twin_objects_fixture();
  const Distilled twin_fields = distill_pair(twin, defaults, kResolution);
  TwinRuns runs;
  for (int seed = 0; seed < 5; ++seed) {
    RegistrationConfig c = defaults;
    c.seed = static_cast<std::uint64_t>(seed);
    RegistrationResult mh = register_fields(twin_fields.pair(), twin.keypoints, c);
    runs.mh += add3d(twin.vertices, mh.transform, twin.truth) / 5.0;
    runs.mh_sets.emplace_back(std::move(mh.samples), &twin_fields);
    c.ablation.uniform_sampling = true;
    const RegistrationResult uni = register_fields(twin_fields.pair(), twin.keypoints, c);
    runs.uniform += add3d(twin.vertices, uni.transform, twin.truth) / 5.0;
  }
  results[7] = criterion_ablation(runs);
  progress("ablation done");

  results[5] = criterion_sampler(self, runs.mh_sets);
  results[8] = criterion_metrics();

  static const char* names[] = {"surface field closed form",  "emission invariance",
                                "self-registration",          "keypoint warmup oracle",
                                "schedule exactness",         "sampler audit",
                                "gradient checks",            "uniform sampling ablation",
                                "metric examples"};
  bool all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::printf("%s criterion %zu (%s): %s\n", results[i].pass ? "PASS" : "FAIL", i + 1, names[i],
                results[i].detail.c_str());
    all = all && results[i].pass;
  }
  std::printf("total %.0f s\n", seconds_since(start));
  return all ? 0 : 1;
}
