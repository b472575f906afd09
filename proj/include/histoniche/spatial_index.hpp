// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "histoniche/core_data.hpp"

namespace histoniche {

struct RelCoord {
  double dx = 0.0;
  double dy = 0.0;
};

// Center first, then the remaining members nearest-first (ties broken by the
// smaller table position).
struct Neighborhood {
  std::size_t center = 0;
  std::vector<std::size_t> members;
  std::vector<RelCoord> rel_coords;
};

inline constexpr std::size_t kDefaultMaxNeighbors = 64;

// Balanced 2-D KD-tree over cell centroids answering fixed-radius queries.
// The tree is immutable once built; only the calibrated radius is set later.
class NeighborhoodIndex {
 public:
  static NeighborhoodIndex build(const CellTable& cells,
                                 std::size_t max_neighbors = kDefaultMaxNeighbors);
  static NeighborhoodIndex build(std::span<const double> xs, std::span<const double> ys,
                                 std::size_t max_neighbors = kDefaultMaxNeighbors);

  std::size_t size() const { return xs_.size(); }
  std::size_t max_neighbors() const { return max_neighbors_; }
  double radius_um() const { return radius_um_; }
  bool calibrated() const { return radius_um_ > 0.0; }
  void set_radius(double radius_um);
  double bbox_diagonal() const { return diagonal_; }
  double x(std::size_t i) const { return xs_[i]; }
  double y(std::size_t i) const { return ys_[i]; }

  // Appends every position j (allowed[j] != 0 when a mask is given) with
  // squared distance <= r*r. Order is tree order, not sorted.
  void query_radius(double cx, double cy, double r, std::vector<std::size_t>& out,
                    std::span<const std::uint8_t> allowed = {}) const;
  std::size_t count_within(double cx, double cy, double r,
                           std::span<const std::uint8_t> allowed = {}) const;

  // Members within radius_um of `cell`, truncated to max_neighbors.
  Neighborhood neighborhood_of(std::size_t cell, std::span<const std::uint8_t> allowed = {}) const;

 private:
  void build_node(std::size_t lo, std::size_t hi, int depth);
  template <class Visit>
  void visit(std::size_t lo, std::size_t hi, double cx, double cy, double r, double r2,
             Visit&& fn) const;

  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<std::size_t> order_;       // tree layout -> table position
  std::vector<std::uint8_t> split_dim_;  // per tree slot, meaningful at range midpoints
  std::size_t max_neighbors_ = kDefaultMaxNeighbors;
  double radius_um_ = 0.0;
  double diagonal_ = 0.0;
};

struct RadiusCalibration {
  double radius_um = 0.0;
  double mean_count = 0.0;     // realized mean neighbor count (center included)
  bool within_tolerance = false;  // |mean/target - 1| <= 5%
  int iterations = 0;
};

inline constexpr int kCalibrationIterations = 40;
inline constexpr double kCalibrationTolerance = 0.05;

// Bisection for the smallest r whose mean neighbor count, over n_samples
// locations drawn uniformly from allowed cell positions, reaches target_count.
// Counts include the cell at the sampled location.
RadiusCalibration calibrate_radius(const NeighborhoodIndex& index, std::size_t target_count,
                                   std::size_t n_samples, std::uint64_t seed,
                                   std::span<const std::uint8_t> allowed = {});

}  // namespace histoniche
