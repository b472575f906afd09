// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "histoniche/error.hpp"
#include "histoniche/eval.hpp"
#include "histoniche/rng.hpp"

namespace histoniche::eval {

namespace {

// Score ties within this tolerance count as "matching" the aligned score.
constexpr double kScoreTolerance = 1e-12;

// Shortest augmenting path with potentials, rows <= cols. 1-based internally.
std::vector<int> hungarian_wide(std::span<const double> cost, std::size_t rows, std::size_t cols) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> p(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<std::uint8_t> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(rows, -1);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (p[j] != 0) assignment[p[j] - 1] = static_cast<int>(j - 1);
  }
  return assignment;
}

void check_vocabulary(const CompositionMatrix& teacher, const CompositionMatrix& method) {
  if (teacher.n_types != method.n_types) {
    fail(ErrorCode::kShapeMismatch, "composition matrices use different cell-type vocabularies (" +
                                        std::to_string(teacher.n_types) + " vs " +
                                        std::to_string(method.n_types) + " types)");
  }
}

}  // namespace

std::vector<int> hungarian(std::span<const double> cost, std::size_t rows, std::size_t cols) {
  if (cost.size() != rows * cols) fail(ErrorCode::kShapeMismatch, "cost matrix size mismatch");
  for (double c : cost) {
    if (!std::isfinite(c)) fail(ErrorCode::kNumeric, "cost matrix has a non-finite entry");
  }
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  if (rows <= cols) return hungarian_wide(cost, rows, cols);

  std::vector<double> transposed(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) transposed[c * rows + r] = cost[r * cols + c];
  }
  const std::vector<int> by_col = hungarian_wide(transposed, cols, rows);
  std::vector<int> assignment(rows, -1);
  for (std::size_t c = 0; c < cols; ++c) {
    if (by_col[c] >= 0) assignment[static_cast<std::size_t>(by_col[c])] = static_cast<int>(c);
  }
  return assignment;
}

double pairing_score(const CompositionMatrix& teacher, const CompositionMatrix& method,
                     std::span<const int> matching) {
  check_vocabulary(teacher, method);
  if (matching.size() != teacher.n_niches) fail(ErrorCode::kShapeMismatch, "matching size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < teacher.n_niches; ++t) {
    const int m = matching[t];
    if (m < 0) continue;
    if (teacher.empty[t] || method.empty[static_cast<std::size_t>(m)]) continue;
    num += teacher.weights[t] * jsd(teacher.row(t), method.row(static_cast<std::size_t>(m)));
    den += teacher.weights[t];
  }
  return den > 0.0 ? num / den : 0.0;
}

NicheAlignment align_niches(const CompositionMatrix& teacher, const CompositionMatrix& method,
                            AlignmentCost cost_mode) {
  check_vocabulary(teacher, method);
  const std::size_t kt = teacher.n_niches;
  const std::size_t km = method.n_niches;
  std::vector<double> divergence(kt * km);
  std::vector<double> cost(kt * km);
  // Pairs touching an empty niche cost more than any full set of real pairs,
  // so the matching fills every pair it can score before using them.
  const double empty_cost = static_cast<double>(std::min(kt, km)) + 1.0;
  for (std::size_t t = 0; t < kt; ++t) {
    for (std::size_t m = 0; m < km; ++m) {
      const double d = jsd(teacher.row(t), method.row(m));
      divergence[t * km + m] = d;
      if (teacher.empty[t] || method.empty[m]) {
        cost[t * km + m] = empty_cost;
      } else {
        cost[t * km + m] = cost_mode == AlignmentCost::kTeacherWeighted ? teacher.weights[t] * d : d;
      }
    }
  }

  NicheAlignment out;
  out.matching = hungarian(cost, kt, km);
  out.pair_jsd.assign(kt, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < kt; ++t) {
    const int m = out.matching[t];
    if (m < 0) continue;
    out.pair_jsd[t] = divergence[t * km + static_cast<std::size_t>(m)];
    if (teacher.empty[t] || method.empty[static_cast<std::size_t>(m)]) {
      out.excluded_pairs.emplace_back(static_cast<int>(t), m);
    }
  }
  out.weighted_mean_jsd = pairing_score(teacher, method, out.matching);
  return out;
}

double permutation_test(const CompositionMatrix& teacher, const CompositionMatrix& method,
                        const NicheAlignment& alignment, std::size_t n_draws,
                        std::uint64_t seed) {
  check_vocabulary(teacher, method);
  if (n_draws == 0) fail(ErrorCode::kInvalidArgument, "n_draws must be >= 1");
  const std::size_t kt = teacher.n_niches;
  const std::size_t km = method.n_niches;
  const double aligned = alignment.weighted_mean_jsd;

  Rng rng(seed);
  std::vector<int> matching(kt, -1);
  std::vector<int> perm(std::max(kt, km));
  std::size_t hits = 0;
  for (std::size_t draw = 0; draw < n_draws; ++draw) {
    std::fill(matching.begin(), matching.end(), -1);
    if (kt <= km) {
      perm.resize(km);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (std::size_t t = 0; t < kt; ++t) matching[t] = perm[t];
    } else {
      perm.resize(kt);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (std::size_t m = 0; m < km; ++m) matching[static_cast<std::size_t>(perm[m])] = static_cast<int>(m);
    }
    if (pairing_score(teacher, method, matching) <= aligned + kScoreTolerance) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_draws);
}

}  // namespace histoniche::eval
