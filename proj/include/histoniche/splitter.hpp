// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "histoniche/core_data.hpp"

namespace histoniche {

enum class SplitTag : std::uint8_t { kTrain = 0, kTest = 1, kDiscarded = 2 };

// Axis along which strips are stacked; kY gives horizontal bands.
enum class StripAxis : std::uint8_t { kY = 0, kX = 1 };

inline constexpr int kStripCount = 4;

struct SplitOptions {
  int crop_size_px = 224;
  double resolution_um_per_px = 0.274;
  int test_strip = 1;  // zero-based, strip 0 is the top (smallest coordinate)
  StripAxis axis = StripAxis::kY;
};

struct SplitAssignment {
  std::vector<SplitTag> tags;
  double buffer_um = 0.0;
  std::array<double, kStripCount - 1> strip_boundaries_um{};
  int test_strip = 1;
  StripAxis axis = StripAxis::kY;
  double extent_min = 0.0;
  double extent_max = 0.0;

  std::size_t count(SplitTag tag) const;
};

// Half the crop edge, in µm.
double buffer_width_um(int crop_size_px, double resolution_um_per_px);

// Equal-width strips over the cell bounding box; a cell is discarded when its
// centroid is within buffer_um of a boundary of the test strip.
SplitAssignment make_split(const CellTable& cells, const SplitOptions& options);

struct SplitMasks {
  CellMask train;
  CellMask test;
};

SplitMasks split_masks(const SplitAssignment& split);

const char* split_tag_name(SplitTag tag);  // "train", "test", "discard"
SplitTag parse_split_tag(const std::string& name);

}  // namespace histoniche
