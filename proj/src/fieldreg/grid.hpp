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

#include <array>
#include <cstddef>
#include <vector>

#include "fieldreg/geometry.hpp"

namespace fieldreg {

/// Dense scalar grid with nodes at origin + (i, j, k) * spacing, stored
/// x-fastest (x, then y, then z).
struct Grid3 {
  std::array<int, 3> res{0, 0, 0};
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::vector<float> values;

  Grid3() = default;
  Grid3(std::array<int, 3> res, const Vec3& origin, const Vec3& spacing, float fill = 0.0f);

  /// res^3 nodes spanning the cube [-radius, radius]^3.
  static Grid3 cube(double radius, int res, float fill = 0.0f);

  std::size_t size() const { return values.size(); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(res[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(res[1]) * k);
  }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  float& at(int i, int j, int k) { return values[index(i, j, k)]; }
  Vec3 node(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
  Vec3 node(std::size_t flat) const;
  double min_spacing() const { return spacing.minCoeff(); }

  /// Trilinear interpolation; zero outside the node bounding box.
  double sample(const Vec3& x) const;
  /// Trilinear value plus its exact (piecewise-constant) spatial gradient.
  double sample_with_gradient(const Vec3& x, Vec3& gradient) const;
  /// Value of the node nearest to x; zero outside half a cell beyond the nodes.
  double nearest(const Vec3& x) const;

  bool same_layout(const Grid3& other) const;
};

}  // namespace fieldreg
