// SPDX-License-Identifier: Apache-2.0
#include "histoniche/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "histoniche/error.hpp"
#include "histoniche/rng.hpp"

namespace histoniche {

namespace {

constexpr std::size_t kLeafSize = 8;
// Pruning slack so rounding in c +/- r never skips a subtree that holds a
// point accepted by the exact d^2 <= r^2 test.
constexpr double kPruneSlack = 1e-9;

void check_mask(std::span<const std::uint8_t> allowed, std::size_t n) {
  if (!allowed.empty() && allowed.size() != n) {
    fail(ErrorCode::kShapeMismatch, "mask length " + std::to_string(allowed.size()) +
                                        " does not match index size " + std::to_string(n));
  }
}

}  // namespace

NeighborhoodIndex NeighborhoodIndex::build(const CellTable& cells, std::size_t max_neighbors) {
  return build(cells.xs(), cells.ys(), max_neighbors);
}

NeighborhoodIndex NeighborhoodIndex::build(std::span<const double> xs, std::span<const double> ys,
                                           std::size_t max_neighbors) {
  if (xs.empty()) fail(ErrorCode::kInvalidArgument, "cannot build an index over an empty table");
  if (xs.size() != ys.size()) fail(ErrorCode::kShapeMismatch, "coordinate arrays differ in length");
  if (max_neighbors == 0) fail(ErrorCode::kInvalidArgument, "max_neighbors must be >= 1");
  NeighborhoodIndex idx;
  idx.xs_.assign(xs.begin(), xs.end());
  idx.ys_.assign(ys.begin(), ys.end());
  idx.max_neighbors_ = max_neighbors;
  idx.order_.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) idx.order_[i] = i;
  idx.split_dim_.assign(xs.size(), 0);
  idx.build_node(0, xs.size(), 0);

  auto [min_x, max_x] = std::minmax_element(idx.xs_.begin(), idx.xs_.end());
  auto [min_y, max_y] = std::minmax_element(idx.ys_.begin(), idx.ys_.end());
  idx.diagonal_ = std::hypot(*max_x - *min_x, *max_y - *min_y);
  return idx;
}

void NeighborhoodIndex::build_node(std::size_t lo, std::size_t hi, int depth) {
  if (hi - lo <= kLeafSize) return;
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (std::size_t i = lo; i < hi; ++i) {
    const std::size_t p = order_[i];
    min_x = std::min(min_x, xs_[p]);
    max_x = std::max(max_x, xs_[p]);
    min_y = std::min(min_y, ys_[p]);
    max_y = std::max(max_y, ys_[p]);
  }
  const std::uint8_t dim = (max_y - min_y) > (max_x - min_x) ? 1 : 0;
  const std::vector<double>& coord = dim == 0 ? xs_ : ys_;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(hi),
                   [&](std::size_t a, std::size_t b) {
                     return coord[a] < coord[b] || (coord[a] == coord[b] && a < b);
                   });
  split_dim_[mid] = dim;
  build_node(lo, mid, depth + 1);
  build_node(mid + 1, hi, depth + 1);
}

template <class Visit>
void NeighborhoodIndex::visit(std::size_t lo, std::size_t hi, double cx, double cy, double r,
                              double r2, Visit&& fn) const {
  if (hi - lo <= kLeafSize) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t p = order_[i];
      const double dx = xs_[p] - cx;
      const double dy = ys_[p] - cy;
      if (dx * dx + dy * dy <= r2) fn(p);
    }
    return;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  const std::size_t p = order_[mid];
  const double dx = xs_[p] - cx;
  const double dy = ys_[p] - cy;
  if (dx * dx + dy * dy <= r2) fn(p);
  const bool by_y = split_dim_[mid] == 1;
  const double split = by_y ? ys_[p] : xs_[p];
  const double c = by_y ? cy : cx;
  const double reach = r * (1.0 + kPruneSlack) + kPruneSlack;
  if (c - reach <= split) visit(lo, mid, cx, cy, r, r2, fn);
  if (c + reach >= split) visit(mid + 1, hi, cx, cy, r, r2, fn);
}

void NeighborhoodIndex::set_radius(double radius_um) {
  if (!(radius_um > 0.0) || !std::isfinite(radius_um)) {
    fail(ErrorCode::kInvalidArgument, "radius must be positive and finite");
  }
  radius_um_ = radius_um;
}

void NeighborhoodIndex::query_radius(double cx, double cy, double r,
                                     std::vector<std::size_t>& out,
                                     std::span<const std::uint8_t> allowed) const {
  check_mask(allowed, size());
  if (r < 0.0) return;
  const double r2 = r * r;
  if (allowed.empty()) {
    visit(0, size(), cx, cy, r, r2, [&](std::size_t p) { out.push_back(p); });
  } else {
    visit(0, size(), cx, cy, r, r2, [&](std::size_t p) {
      if (allowed[p]) out.push_back(p);
    });
  }
}

std::size_t NeighborhoodIndex::count_within(double cx, double cy, double r,
                                            std::span<const std::uint8_t> allowed) const {
  check_mask(allowed, size());
  if (r < 0.0) return 0;
  std::size_t count = 0;
  const double r2 = r * r;
  if (allowed.empty()) {
    visit(0, size(), cx, cy, r, r2, [&](std::size_t) { ++count; });
  } else {
    visit(0, size(), cx, cy, r, r2, [&](std::size_t p) { count += allowed[p] != 0; });
  }
  return count;
}

Neighborhood NeighborhoodIndex::neighborhood_of(std::size_t cell,
                                                std::span<const std::uint8_t> allowed) const {
  if (!calibrated()) fail(ErrorCode::kState, "index radius has not been calibrated");
  if (cell >= size()) fail(ErrorCode::kInvalidArgument, "cell position out of range");
  check_mask(allowed, size());
  if (!allowed.empty() && !allowed[cell]) {
    fail(ErrorCode::kInvalidArgument,
         "cell " + std::to_string(cell) + " is excluded by its own neighborhood mask");
  }
  const double cx = xs_[cell];
  const double cy = ys_[cell];

  std::vector<std::pair<double, std::size_t>> found;
  const double r2 = radius_um_ * radius_um_;
  auto take = [&](std::size_t p) {
    if (p == cell) return;
    if (!allowed.empty() && !allowed[p]) return;
    const double dx = xs_[p] - cx;
    const double dy = ys_[p] - cy;
    found.emplace_back(dx * dx + dy * dy, p);
  };
  visit(0, size(), cx, cy, radius_um_, r2, take);

  const std::size_t keep = std::min(found.size(), max_neighbors_ - 1);
  std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(keep), found.end());

  Neighborhood nb;
  nb.center = cell;
  nb.members.reserve(keep + 1);
  nb.rel_coords.reserve(keep + 1);
  nb.members.push_back(cell);
  nb.rel_coords.push_back({0.0, 0.0});
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t p = found[i].second;
    nb.members.push_back(p);
    nb.rel_coords.push_back({xs_[p] - cx, ys_[p] - cy});
  }
  return nb;
}

RadiusCalibration calibrate_radius(const NeighborhoodIndex& index, std::size_t target_count,
                                   std::size_t n_samples, std::uint64_t seed,
                                   std::span<const std::uint8_t> allowed) {
  if (target_count == 0) fail(ErrorCode::kInvalidArgument, "target_count must be >= 1");
  if (n_samples == 0) fail(ErrorCode::kInvalidArgument, "n_samples must be >= 1");
  check_mask(allowed, index.size());

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (allowed.empty() || allowed[i]) pool.push_back(i);
  }
  if (pool.empty()) fail(ErrorCode::kInvalidArgument, "no cells available for calibration");
  if (pool.size() < target_count) {
    fail(ErrorCode::kInvalidArgument,
         "unreachable target of " + std::to_string(target_count) + " neighbors: at most " +
             std::to_string(pool.size()) + " neighbors achievable");
  }

  Rng rng(seed);
  std::vector<std::size_t> samples(n_samples);
  for (auto& s : samples) s = pool[rng.below(pool.size())];

  const std::size_t needed = target_count * n_samples;
  const auto total_at = [&](double r) {
    std::size_t total = 0;
    for (std::size_t s : samples) total += index.count_within(index.x(s), index.y(s), r, allowed);
    return total;
  };

  // The predicate "mean count >= target" is monotone in r, so a fixed number
  // of bisection steps makes the result monotone in target_count as well.
  double lo = 0.0;
  double hi = std::max(index.bbox_diagonal(), 1e-6);
  RadiusCalibration out;
  for (int it = 0; it < kCalibrationIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (total_at(mid) >= needed) {
      hi = mid;
    } else {
      lo = mid;
    }
    out.iterations = it + 1;
  }
  out.radius_um = hi;
  out.mean_count = static_cast<double>(total_at(hi)) / static_cast<double>(n_samples);
  out.within_tolerance =
      std::abs(out.mean_count / static_cast<double>(target_count) - 1.0) <= kCalibrationTolerance;
  return out;
}

}  // namespace histoniche
