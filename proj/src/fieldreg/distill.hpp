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
#include <memory>
#include <variant>
#include <vector>

#include "fieldreg/grid.hpp"

namespace fieldreg {

class Mlp;

/// Smoothed surface field S^sigma(x) = E_{z ~ N(x, sigma^2 I)}[S^eps(z)],
/// backed by a precomputed grid or a trained network. Queries are clamped to
/// [0, 1]. Grid-backed gradients are the exact trilinear derivative;
/// network-backed ones use central differences.
class SmoothedField {
 public:
  SmoothedField(double sigma, Grid3 grid);
  SmoothedField(double sigma, std::shared_ptr<const Mlp> network, double gradient_step);

  double sigma() const { return sigma_; }
  double query(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  /// Value and spatial gradient in one call.
  double query_with_gradient(const Vec3& x, Vec3& gradient) const;
  double gradient_step() const { return gradient_step_; }

  /// Backing grid, or nullptr for network-backed fields.
  const Grid3* grid() const;

 private:
  double raw(const Vec3& x) const;

  double sigma_;
  double gradient_step_;
  std::variant<std::shared_ptr<const Grid3>, std::shared_ptr<const Mlp>> backing_;
};

/// Binary field value at x under the nearest-node (box) interpretation used by
/// every smoothing routine; zero outside the grid.
inline double binary_at(const Grid3& field, const Vec3& x) { return field.nearest(x); }

/// Monte-Carlo estimate of the Gaussian-smoothed binary field at x, with
/// samples truncated at 4 sigma per axis. sigma == 0 returns binary_at(x).
double smooth_mc(const Grid3& field, const Vec3& x, double sigma, int samples, std::uint64_t seed);

/// Exact convolution of the box-interpreted grid with an isotropic Gaussian
/// (truncated at 4 sigma, zero padded), evaluated at the nodes.
Grid3 gaussian_smooth(const Grid3& field, double sigma);

struct DistillOptions {
  enum class Method { kConvolution, kMonteCarlo };
  Method method = Method::kConvolution;
  int samples = 64;         // Monte-Carlo samples per node
  std::uint64_t seed = 0;   // Monte-Carlo seed; per-node streams derive from it
};

/// One grid-backed field per sigma.
std::vector<SmoothedField> distill_grid(const Grid3& field, const std::vector<double>& sigmas,
                                        const DistillOptions& options = {});

/// Integrated positional encoding, level-major: for level l the six entries
/// sin(2^l x_i) * a_l then cos(2^l x_i) * a_l, with a_l = exp(-4^l sigma^2 / 2).
struct IPEFeatures {
  int levels = 0;
  std::vector<double> values;

  double attenuation(int level, double sigma) const;
};

IPEFeatures ipe_encode(const Vec3& x, double sigma, int levels);

/// pred - target * log(pred). Throws NonPositivePrediction for pred <= 0.
double poisson_loss(double pred, double target);
/// d/dpred of poisson_loss: 1 - target / pred.
double poisson_loss_grad(double pred, double target);

struct MlpConfig {
  int levels = 8;
  int width = 256;
  int depth = 8;      // number of linear layers
  int steps = 2000;
  int batch = 256;
  double lr = 1e-3;   // peak rate, cosine-decayed to zero over `steps`
  int target_samples = 8;  // Monte-Carlo samples per training target
  std::uint64_t seed = 0;
};

/// Trains an IPE-conditioned MLP on Poisson loss against Monte-Carlo targets
/// of S^sigma at points uniform in B(0, radius). Throws DegenerateField for an
/// all-zero field. `loss_history`, when given, receives the per-step loss.
SmoothedField distill_mlp(const Grid3& field, double sigma, double radius, const MlpConfig& config,
                          std::vector<double>* loss_history = nullptr);

}  // namespace fieldreg
