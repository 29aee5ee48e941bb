// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace daem {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height × width × 3

  Raster() = default;
  Raster(std::size_t w, std::size_t h, Rgb fill = {255, 255, 255});

  Rgb at(std::size_t x, std::size_t y) const;
  void set(std::size_t x, std::size_t y, Rgb c);

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Piecewise-linear jet map: 0 blue, 1/3 cyan, 2/3 yellow, 1 red. Input is
/// clamped to [0, 1].
Rgb jet(double v);

/// round((1 − α)·base + α·over) per channel.
Rgb blend(Rgb base, Rgb over, double alpha);

/// Deterministic PNG encoding (no timestamps or text chunks).
std::string encode_png(const Raster& r);
Raster decode_png(const std::string& bytes);
void write_png(const Raster& r, const std::filesystem::path& path);
Raster read_png(const std::filesystem::path& path);

}  // namespace daem
