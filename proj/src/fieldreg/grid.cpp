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

#include "fieldreg/grid.hpp"

#include <algorithm>
#include <cmath>

namespace fieldreg {

Grid3::Grid3(std::array<int, 3> r, const Vec3& o, const Vec3& s, float fill)
    : res(r), origin(o), spacing(s) {
  for (int n : res) {
    if (n < 1) fail(ErrorCode::kInvalidArgument, "grid resolution must be positive");
  }
  if (!(spacing.minCoeff() > 0.0)) fail(ErrorCode::kInvalidArgument, "grid spacing must be positive");
  values.assign(static_cast<std::size_t>(res[0]) * res[1] * res[2], fill);
}

Grid3 Grid3::cube(double radius, int n, float fill) {
  if (n < 2) fail(ErrorCode::kInvalidArgument, "cube grid needs at least 2 nodes per axis");
  const double h = 2.0 * radius / (n - 1);
  return Grid3({n, n, n}, Vec3::Constant(-radius), Vec3::Constant(h), fill);
}

Vec3 Grid3::node(std::size_t flat) const {
  const std::size_t nx = res[0];
  const std::size_t ny = res[1];
  const int i = static_cast<int>(flat % nx);
  const int j = static_cast<int>((flat / nx) % ny);
  const int k = static_cast<int>(flat / (nx * ny));
  return node(i, j, k);
}

double Grid3::sample(const Vec3& x) const {
  double f[3];
  int i0[3];
  double w[3];
  for (int a = 0; a < 3; ++a) {
    f[a] = (x[a] - origin[a]) / spacing[a];
    if (!(f[a] >= 0.0) || f[a] > res[a] - 1) return 0.0;
    i0[a] = std::min(static_cast<int>(f[a]), std::max(res[a] - 2, 0));
    w[a] = res[a] > 1 ? f[a] - i0[a] : 0.0;
  }
  const int dx = res[0] > 1 ? 1 : 0;
  const std::size_t sy = res[1] > 1 ? static_cast<std::size_t>(res[0]) : 0;
  const std::size_t sz = res[2] > 1 ? static_cast<std::size_t>(res[0]) * res[1] : 0;
  const float* p = values.data() + index(i0[0], i0[1], i0[2]);
  const double c00 = p[0] + w[0] * (p[dx] - p[0]);
  const double c10 = p[sy] + w[0] * (p[sy + dx] - p[sy]);
  const double c01 = p[sz] + w[0] * (p[sz + dx] - p[sz]);
  const double c11 = p[sz + sy] + w[0] * (p[sz + sy + dx] - p[sz + sy]);
  const double c0 = c00 + w[1] * (c10 - c00);
  const double c1 = c01 + w[1] * (c11 - c01);
  return c0 + w[2] * (c1 - c0);
}

double Grid3::sample_with_gradient(const Vec3& x, Vec3& gradient) const {
  gradient.setZero();
  double f[3];
  int i0[3];
  double w[3];
  for (int a = 0; a < 3; ++a) {
    f[a] = (x[a] - origin[a]) / spacing[a];
    if (!(f[a] >= 0.0) || f[a] > res[a] - 1) return 0.0;
    i0[a] = std::min(static_cast<int>(f[a]), std::max(res[a] - 2, 0));
    w[a] = res[a] > 1 ? f[a] - i0[a] : 0.0;
  }
  const int dx = res[0] > 1 ? 1 : 0;
  const std::size_t sy = res[1] > 1 ? static_cast<std::size_t>(res[0]) : 0;
  const std::size_t sz = res[2] > 1 ? static_cast<std::size_t>(res[0]) * res[1] : 0;
  const float* p = values.data() + index(i0[0], i0[1], i0[2]);
  const double v000 = p[0], v100 = p[dx], v010 = p[sy], v110 = p[sy + dx];
  const double v001 = p[sz], v101 = p[sz + dx], v011 = p[sz + sy], v111 = p[sz + sy + dx];
  const double c00 = v000 + w[0] * (v100 - v000);
  const double c10 = v010 + w[0] * (v110 - v010);
  const double c01 = v001 + w[0] * (v101 - v001);
  const double c11 = v011 + w[0] * (v111 - v011);
  const double c0 = c00 + w[1] * (c10 - c00);
  const double c1 = c01 + w[1] * (c11 - c01);
  // d/dw0
  const double d00 = v100 - v000;
  const double d10 = v110 - v010;
  const double d01 = v101 - v001;
  const double d11 = v111 - v011;
  const double d0 = d00 + w[1] * (d10 - d00);
  const double d1 = d01 + w[1] * (d11 - d01);
  const double gx = d0 + w[2] * (d1 - d0);
  const double gy = (c10 - c00) + w[2] * ((c11 - c01) - (c10 - c00));
  const double gz = c1 - c0;
  if (res[0] > 1) gradient.x() = gx / spacing.x();
  if (res[1] > 1) gradient.y() = gy / spacing.y();
  if (res[2] > 1) gradient.z() = gz / spacing.z();
  return c0 + w[2] * (c1 - c0);
}

double Grid3::nearest(const Vec3& x) const {
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((x[a] - origin[a]) / spacing[a] + 0.5);
    if (!(f >= 0.0) || f > res[a] - 1) return 0.0;
    idx[a] = static_cast<int>(f);
  }
  return at(idx[0], idx[1], idx[2]);
}

bool Grid3::same_layout(const Grid3& other) const {
  return res == other.res && origin == other.origin && spacing == other.spacing;
}

}  // namespace fieldreg
