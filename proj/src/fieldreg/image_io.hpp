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
#include <filesystem>
#include <span>
#include <vector>

#include "fieldreg/fields.hpp"

namespace fieldreg {

/// 8-bit RGB PNG, rows top to bottom.
std::vector<std::uint8_t> encode_png(int width, int height, std::span<const std::uint8_t> rgb);

/// Single-channel little-endian PFM ("Pf"), rows stored bottom to top as the
/// format requires.
std::vector<std::uint8_t> encode_pfm(int width, int height, std::span<const float> values);

/// Color channels clamped to [0, 1] and quantized; views without emission
/// render their opacity as gray over the background.
std::vector<std::uint8_t> to_rgb8(const RenderedView& view, const Vec3& background = Vec3::Zero());

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace fieldreg
