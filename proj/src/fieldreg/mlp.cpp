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

#include "fieldreg/mlp.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "fieldreg/distill.hpp"

namespace fieldreg {

namespace {

constexpr float kPredFloor = 1e-6f;

float softplus(float z) { return z > 20.0f ? z : std::log1p(std::exp(z)); }
float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }

Vec3 uniform_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.squaredNorm() <= 1.0) return radius * p;
  }
}

}  // namespace

Mlp::Mlp(double sigma, double coordinate_scale, int levels, int width, int depth, std::uint64_t seed)
    : sigma_(sigma), scale_(coordinate_scale), levels_(levels) {
  if (levels < 1 || width < 1 || depth < 2) {
    fail(ErrorCode::kInvalidArgument, "MLP needs levels >= 1, width >= 1 and depth >= 2");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  int fan_in = 6 * levels;
  for (int layer = 0; layer < depth; ++layer) {
    const int fan_out = layer + 1 == depth ? 1 : width;
    // He init for ReLU; the output layer starts at zero so the first
    // prediction is exactly the bias.
    const float stddev = layer + 1 == depth ? 0.0f : std::sqrt(2.0f / fan_in);
    Eigen::MatrixXf W(fan_out, fan_in);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = stddev * gauss(rng);
    weights_.push_back(std::move(W));
    biases_.push_back(Eigen::VectorXf::Zero(fan_out));
    adam_w_.push_back({Eigen::MatrixXf::Zero(fan_out, fan_in), Eigen::MatrixXf::Zero(fan_out, fan_in)});
    adam_b_.push_back({Eigen::MatrixXf::Zero(fan_out, 1), Eigen::MatrixXf::Zero(fan_out, 1)});
    fan_in = fan_out;
  }
}

Eigen::MatrixXf Mlp::encode(const std::vector<Vec3>& points) const {
  Eigen::MatrixXf X(6 * levels_, static_cast<Eigen::Index>(points.size()));
  for (std::size_t c = 0; c < points.size(); ++c) {
    const IPEFeatures f = ipe_encode(scale_ * points[c], scale_ * sigma_, levels_);
    for (std::size_t r = 0; r < f.values.size(); ++r) {
      X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<float>(f.values[r]);
    }
  }
  return X;
}

Eigen::RowVectorXf Mlp::forward(const Eigen::MatrixXf& inputs,
                                std::vector<Eigen::MatrixXf>* activations) const {
  Eigen::MatrixXf a = inputs;
  if (activations) activations->push_back(a);
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    Eigen::MatrixXf z = weights_[layer] * a;
    z.colwise() += biases_[layer];
    if (layer + 1 < weights_.size()) {
      a = z.cwiseMax(0.0f);
    } else {
      a = z;  // pre-activation of the output
    }
    if (activations) activations->push_back(a);
  }
  return a.row(0);
}

double Mlp::evaluate(const Vec3& x) const {
  const Eigen::RowVectorXf z = forward(encode({x}), nullptr);
  return softplus(z(0)) + kPredFloor;
}

double Mlp::train_step(const Eigen::MatrixXf& inputs, const Eigen::RowVectorXf& targets, double lr) {
  std::vector<Eigen::MatrixXf> acts;
  const Eigen::RowVectorXf z = forward(inputs, &acts);
  const Eigen::Index batch = z.size();
  Eigen::MatrixXf delta(1, batch);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const float pred = softplus(z(i)) + kPredFloor;
    loss += poisson_loss(pred, targets(i));
    delta(0, i) = static_cast<float>(poisson_loss_grad(pred, targets(i))) * sigmoid(z(i)) / batch;
  }
  loss /= static_cast<double>(batch);

  ++step_;
  constexpr float b1 = 0.9f;
  constexpr float b2 = 0.999f;
  constexpr float eps = 1e-8f;
  const float c1 = 1.0f - std::pow(b1, static_cast<float>(step_));
  const float c2 = 1.0f - std::pow(b2, static_cast<float>(step_));
  auto adam = [&](Eigen::MatrixXf& param, Adam& state, const Eigen::MatrixXf& grad) {
    state.m = b1 * state.m + (1.0f - b1) * grad;
    state.v = b2 * state.v + (1.0f - b2) * grad.cwiseProduct(grad);
    param.array() -= static_cast<float>(lr) * (state.m.array() / c1) /
                     ((state.v.array() / c2).sqrt() + eps);
  };

  for (std::size_t layer = weights_.size(); layer-- > 0;) {
    const Eigen::MatrixXf& input = acts[layer];
    const Eigen::MatrixXf grad_w = delta * input.transpose();
    const Eigen::MatrixXf grad_b = delta.rowwise().sum();
    Eigen::MatrixXf next;
    if (layer > 0) {
      next = weights_[layer].transpose() * delta;
      next.array() *= (input.array() > 0.0f).cast<float>();
    }
    adam(weights_[layer], adam_w_[layer], grad_w);
    Eigen::MatrixXf b = biases_[layer];
    adam(b, adam_b_[layer], grad_b);
    biases_[layer] = b;
    delta = std::move(next);
  }
  return loss;
}

SmoothedField distill_mlp(const Grid3& field, double sigma, double radius, const MlpConfig& config,
                          std::vector<double>* loss_history) {
  if (!(radius > 0.0)) fail(ErrorCode::kInvalidArgument, "radius must be positive");
  if (config.steps < 0 || config.batch < 1) fail(ErrorCode::kInvalidArgument, "bad MLP schedule");
  bool any_set = false;
  for (float v : field.values) any_set = any_set || v > 0.0f;
  if (!any_set) fail(ErrorCode::kDegenerateField, "surface field is empty; nothing to distill");

  const double scale = std::numbers::pi / radius;
  auto net = std::make_shared<Mlp>(sigma, scale, config.levels, config.width, config.depth, config.seed);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66Dull);

  auto draw_batch = [&](std::vector<Vec3>& points, Eigen::RowVectorXf& targets) {
    points.resize(config.batch);
    targets.resize(config.batch);
    for (int i = 0; i < config.batch; ++i) {
      points[i] = uniform_in_ball(rng, radius);
      targets(i) = static_cast<float>(smooth_mc(field, points[i], sigma, config.target_samples, rng()));
    }
  };

  std::vector<Vec3> points;
  Eigen::RowVectorXf targets;
  draw_batch(points, targets);
  // Start the output at the mean target so early steps do not fight the prior.
  const float mean = std::max(targets.mean(), 1e-3f);
  net->set_output_bias(mean > 20.0f ? mean : std::log(std::expm1(mean)));

  for (int step = 0; step < config.steps; ++step) {
    if (step > 0) draw_batch(points, targets);
    const double lr = 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * step / config.steps));
    const double loss = net->train_step(net->encode(points), targets, lr);
    if (loss_history) loss_history->push_back(loss);
  }
  return SmoothedField(sigma, std::shared_ptr<const Mlp>(net), 0.5 * field.min_spacing());
}

}  // namespace fieldreg
