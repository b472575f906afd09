// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

#include "histoniche/core_data.hpp"
#include "histoniche/splitter.hpp"

namespace histoniche {

inline constexpr std::size_t kPaletteSize = 20;

// Fixed 20-color categorical palette ("#rrggbb").
const std::array<const char*, kPaletteSize>& niche_palette();

struct RenderOptions {
  int width_px = 800;        // plot area width; height follows the aspect ratio
  double dot_radius_px = 2.0;
  bool legend = true;
  std::string title;
};

// Vector niche map: one dot per cell, y grows downward so the smallest
// coordinate (strip 0) is at the top. Labels of -1 are drawn in gray.
// When `split` is given, strip boundaries and the buffer bands around the
// test strip are overlaid.
std::string niche_map_svg(const CellTable& cells, std::span<const int> labels,
                          std::size_t n_niches, const SplitAssignment* split = nullptr,
                          const RenderOptions& options = {});

// Binary PPM (P6) raster of the same map, without legend or text.
std::string niche_map_ppm(const CellTable& cells, std::span<const int> labels,
                          std::size_t n_niches, const SplitAssignment* split = nullptr,
                          const RenderOptions& options = {});

void write_file(const std::string& path, const std::string& bytes);

}  // namespace histoniche
