// SPDX-License-Identifier: Apache-2.0
#include "histoniche/splitter.hpp"

#include <algorithm>
#include <cmath>

#include "histoniche/error.hpp"

namespace histoniche {

std::size_t SplitAssignment::count(SplitTag tag) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), tag));
}

double buffer_width_um(int crop_size_px, double resolution_um_per_px) {
  if (crop_size_px <= 0) fail(ErrorCode::kInvalidArgument, "crop_size_px must be positive");
  if (!(resolution_um_per_px > 0.0) || !std::isfinite(resolution_um_per_px)) {
    fail(ErrorCode::kInvalidArgument, "resolution_um_per_px must be positive");
  }
  return (static_cast<double>(crop_size_px) / 2.0) * resolution_um_per_px;
}

SplitAssignment make_split(const CellTable& cells, const SplitOptions& options) {
  if (cells.empty()) fail(ErrorCode::kInvalidArgument, "cannot split an empty table");
  if (options.test_strip < 0 || options.test_strip >= kStripCount) {
    fail(ErrorCode::kInvalidArgument, "test_strip must be in [0, 3]");
  }
  SplitAssignment split;
  split.buffer_um = buffer_width_um(options.crop_size_px, options.resolution_um_per_px);
  split.test_strip = options.test_strip;
  split.axis = options.axis;

  const bool by_y = options.axis == StripAxis::kY;
  const Bounds& b = cells.bounds();
  split.extent_min = by_y ? b.min_y : b.min_x;
  split.extent_max = by_y ? b.max_y : b.max_x;
  const double extent = split.extent_max - split.extent_min;
  if (!(extent > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "degenerate extent: all cells lie on one line across strips");
  }
  const double height = extent / kStripCount;
  for (int s = 0; s < kStripCount - 1; ++s) {
    split.strip_boundaries_um[static_cast<std::size_t>(s)] = split.extent_min + (s + 1) * height;
  }

  // Boundaries adjacent to the test strip; train-train boundaries discard nobody.
  std::vector<double> guarded;
  if (split.test_strip > 0) {
    guarded.push_back(split.strip_boundaries_um[static_cast<std::size_t>(split.test_strip - 1)]);
  }
  if (split.test_strip < kStripCount - 1) {
    guarded.push_back(split.strip_boundaries_um[static_cast<std::size_t>(split.test_strip)]);
  }

  split.tags.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double v = by_y ? cells.y(i) : cells.x(i);
    int strip = static_cast<int>(std::floor((v - split.extent_min) / height));
    strip = std::clamp(strip, 0, kStripCount - 1);
    bool discard = false;
    for (double line : guarded) discard = discard || std::abs(v - line) <= split.buffer_um;
    if (discard) {
      split.tags[i] = SplitTag::kDiscarded;
    } else {
      split.tags[i] = strip == split.test_strip ? SplitTag::kTest : SplitTag::kTrain;
    }
  }
  return split;
}

SplitMasks split_masks(const SplitAssignment& split) {
  SplitMasks m;
  m.train.resize(split.tags.size());
  m.test.resize(split.tags.size());
  for (std::size_t i = 0; i < split.tags.size(); ++i) {
    m.train[i] = split.tags[i] == SplitTag::kTrain;
    m.test[i] = split.tags[i] == SplitTag::kTest;
  }
  return m;
}

const char* split_tag_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain:
      return "train";
    case SplitTag::kTest:
      return "test";
    case SplitTag::kDiscarded:
      return "discard";
  }
  return "discard";
}

SplitTag parse_split_tag(const std::string& name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "test") return SplitTag::kTest;
  if (name == "discard") return SplitTag::kDiscarded;
  fail(ErrorCode::kParse, "unknown split tag '" + name + "'");
}

}  // namespace histoniche
