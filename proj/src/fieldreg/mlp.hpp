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
#include <vector>

#include <Eigen/Dense>

#include "fieldreg/geometry.hpp"

namespace fieldreg {

/// ReLU MLP over integrated positional encodings with a softplus output, so
/// predictions stay strictly positive for the Poisson loss.
class Mlp {
 public:
  Mlp(double sigma, double coordinate_scale, int levels, int width, int depth, std::uint64_t seed);

  double evaluate(const Vec3& x) const;

  /// Encoded inputs for a batch of points, one column per point.
  Eigen::MatrixXf encode(const std::vector<Vec3>& points) const;
  /// One Adam step on mean Poisson loss; returns the batch loss.
  double train_step(const Eigen::MatrixXf& inputs, const Eigen::RowVectorXf& targets, double lr);
  void set_output_bias(float b) { biases_.back()(0) = b; }

 private:
  struct Adam {
    Eigen::MatrixXf m;
    Eigen::MatrixXf v;
  };

  Eigen::RowVectorXf forward(const Eigen::MatrixXf& inputs,
                             std::vector<Eigen::MatrixXf>* activations) const;

  double sigma_;
  double scale_;
  int levels_;
  std::vector<Eigen::MatrixXf> weights_;
  std::vector<Eigen::VectorXf> biases_;
  std::vector<Adam> adam_w_;
  std::vector<Adam> adam_b_;
  long step_ = 0;
};

}  // namespace fieldreg
