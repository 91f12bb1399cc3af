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

#include "fieldreg/distill.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fieldreg/mlp.hpp"

namespace fieldreg {

namespace {

constexpr double kTruncation = 4.0;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Box-Gaussian weights for integer offsets -J..J at the given spacing.
std::vector<double> kernel_weights(double sigma, double spacing) {
  if (sigma <= 0.0) return {1.0};
  const int half = static_cast<int>(std::ceil(kTruncation * sigma / spacing));
  std::vector<double> w(2 * half + 1);
  double total = 0.0;
  for (int j = -half; j <= half; ++j) {
    const double hi = normal_cdf((j + 0.5) * spacing / sigma);
    const double lo = normal_cdf((j - 0.5) * spacing / sigma);
    w[j + half] = hi - lo;
    total += hi - lo;
  }
  for (double& v : w) v /= total;
  return w;
}

void convolve_axis(const Grid3& in, Grid3& out, int axis, const std::vector<double>& w) {
  const int half = static_cast<int>(w.size() / 2);
  const int n = in.res[axis];
  const std::size_t stride = axis == 0 ? 1
                             : axis == 1 ? static_cast<std::size_t>(in.res[0])
                                         : static_cast<std::size_t>(in.res[0]) * in.res[1];
  const int other_a = axis == 0 ? 1 : 0;
  const int other_b = axis == 2 ? 1 : 2;
  const int na = in.res[other_a];
  const int nb = in.res[other_b];
#pragma omp parallel for
  for (int b = 0; b < nb; ++b) {
    std::vector<double> line(n);
    for (int a = 0; a < na; ++a) {
      int idx[3] = {0, 0, 0};
      idx[other_a] = a;
      idx[other_b] = b;
      const std::size_t base = in.index(idx[0], idx[1], idx[2]);
      for (int i = 0; i < n; ++i) line[i] = in.values[base + i * stride];
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const int lo = std::max(-half, -i);
        const int hi = std::min(half, n - 1 - i);
        for (int j = lo; j <= hi; ++j) acc += w[j + half] * line[i + j];
        out.values[base + i * stride] = static_cast<float>(acc);
      }
    }
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

SmoothedField::SmoothedField(double sigma, Grid3 grid)
    : sigma_(sigma),
      gradient_step_(0.5 * grid.min_spacing()),
      backing_(std::make_shared<const Grid3>(std::move(grid))) {
  if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "sigma must be non-negative");
}

SmoothedField::SmoothedField(double sigma, std::shared_ptr<const Mlp> network, double gradient_step)
    : sigma_(sigma), gradient_step_(gradient_step), backing_(std::move(network)) {
  if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "sigma must be non-negative");
  if (!(gradient_step > 0.0)) fail(ErrorCode::kInvalidArgument, "gradient step must be positive");
}

const Grid3* SmoothedField::grid() const {
  const auto* g = std::get_if<std::shared_ptr<const Grid3>>(&backing_);
  return g ? g->get() : nullptr;
}

double SmoothedField::raw(const Vec3& x) const {
  if (const auto* g = std::get_if<std::shared_ptr<const Grid3>>(&backing_)) return (*g)->sample(x);
  return std::get<std::shared_ptr<const Mlp>>(backing_)->evaluate(x);
}

double SmoothedField::query(const Vec3& x) const { return std::clamp(raw(x), 0.0, 1.0); }

Vec3 SmoothedField::gradient(const Vec3& x) const {
  Vec3 g;
  query_with_gradient(x, g);
  return g;
}

double SmoothedField::query_with_gradient(const Vec3& x, Vec3& gradient) const {
  if (const auto* g = std::get_if<std::shared_ptr<const Grid3>>(&backing_)) {
    const double v = (*g)->sample_with_gradient(x, gradient);
    if (v < 0.0 || v > 1.0) gradient.setZero();
    return std::clamp(v, 0.0, 1.0);
  }
  const double s = gradient_step_;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = x;
    Vec3 hi = x;
    lo[a] -= s;
    hi[a] += s;
    gradient[a] = (query(hi) - query(lo)) / (2.0 * s);
  }
  return query(x);
}

double smooth_mc(const Grid3& field, const Vec3& x, double sigma, int samples, std::uint64_t seed) {
  if (samples < 1) fail(ErrorCode::kInvalidArgument, "Monte-Carlo sample count must be >= 1");
  if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "sigma must be non-negative");
  if (sigma == 0.0) return binary_at(field, x);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto truncated = [&]() {
    double z = 0.0;
    do {
      z = gauss(rng);
    } while (std::abs(z) > kTruncation);
    return z;
  };
  double sum = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 z = x + sigma * Vec3(truncated(), truncated(), truncated());
    sum += binary_at(field, z);
  }
  return sum / samples;
}

Grid3 gaussian_smooth(const Grid3& field, double sigma) {
  if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "sigma must be non-negative");
  if (sigma == 0.0) return field;
  Grid3 a = field;
  Grid3 b = field;
  convolve_axis(field, a, 0, kernel_weights(sigma, field.spacing.x()));
  convolve_axis(a, b, 1, kernel_weights(sigma, field.spacing.y()));
  convolve_axis(b, a, 2, kernel_weights(sigma, field.spacing.z()));
  return a;
}

std::vector<SmoothedField> distill_grid(const Grid3& field, const std::vector<double>& sigmas,
                                        const DistillOptions& options) {
  if (sigmas.empty()) fail(ErrorCode::kInvalidArgument, "sigma list must not be empty");
  std::vector<SmoothedField> out;
  out.reserve(sigmas.size());
  for (std::size_t level = 0; level < sigmas.size(); ++level) {
    const double sigma = sigmas[level];
    if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "sigma must be non-negative");
    if (options.method == DistillOptions::Method::kConvolution) {
      out.emplace_back(sigma, gaussian_smooth(field, sigma));
      continue;
    }
    Grid3 grid = field;
    const long n = static_cast<long>(grid.size());
    const std::uint64_t level_seed = mix_seed(options.seed, level);
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < n; ++idx) {
      grid.values[idx] = static_cast<float>(smooth_mc(field, field.node(static_cast<std::size_t>(idx)),
                                                      sigma, options.samples,
                                                      mix_seed(level_seed, idx)));
    }
    out.emplace_back(sigma, std::move(grid));
  }
  return out;
}

double IPEFeatures::attenuation(int level, double sigma) const {
  return std::exp(-0.5 * std::ldexp(1.0, 2 * level) * sigma * sigma);
}

IPEFeatures ipe_encode(const Vec3& x, double sigma, int levels) {
  if (levels < 1) fail(ErrorCode::kInvalidArgument, "IPE needs at least one level");
  IPEFeatures f;
  f.levels = levels;
  f.values.resize(6 * static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const double scale = std::ldexp(1.0, l);
    const double att = f.attenuation(l, sigma);
    for (int i = 0; i < 3; ++i) {
      f.values[6 * l + i] = std::sin(scale * x[i]) * att;
      f.values[6 * l + 3 + i] = std::cos(scale * x[i]) * att;
    }
  }
  return f;
}

double poisson_loss(double pred, double target) {
  if (!(pred > 0.0)) fail(ErrorCode::kNonPositivePrediction, "Poisson loss needs a positive prediction");
  return pred - target * std::log(pred);
}

double poisson_loss_grad(double pred, double target) {
  if (!(pred > 0.0)) fail(ErrorCode::kNonPositivePrediction, "Poisson loss needs a positive prediction");
  return 1.0 - target / pred;
}

}  // namespace fieldreg
