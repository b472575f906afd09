// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "histoniche/eval.hpp"
#include "histoniche/rng.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace histoniche;
using namespace histoniche::eval;

namespace {

CompositionMatrix random_matrix(Rng& rng, std::size_t k, std::size_t c) {
  CompositionMatrix m;
  m.n_niches = k;
  m.n_types = c;
  m.rows.resize(k * c);
  m.weights.resize(k);
  m.empty.assign(k, 0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += m.rows[i * c + j] = rng.uniform() + 1e-3;
    for (std::size_t j = 0; j < c; ++j) m.rows[i * c + j] /= s;
    wsum += m.weights[i] = rng.uniform() + 0.05;
  }
  for (double& w : m.weights) w /= wsum;
  return m;
}

CompositionMatrix permuted(const CompositionMatrix& m, const std::vector<int>& perm) {
  CompositionMatrix out = m;
  for (std::size_t i = 0; i < m.n_niches; ++i) {
    const auto src = static_cast<std::size_t>(perm[i]);
    std::copy_n(m.rows.begin() + static_cast<std::ptrdiff_t>(src * m.n_types), m.n_types,
                out.rows.begin() + static_cast<std::ptrdiff_t>(i * m.n_types));
    out.weights[i] = m.weights[src];
    out.empty[i] = m.empty[src];
  }
  return out;
}

double matched_cost(const std::vector<double>& cost, std::size_t cols, const std::vector<int>& match) {
  double c = 0.0;
  for (std::size_t r = 0; r < match.size(); ++r) {
    if (match[r] >= 0) c += cost[r * cols + static_cast<std::size_t>(match[r])];
  }
  return c;
}

}  // namespace

TEST_CASE("Hungarian equals exhaustive search") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.below(6);
    const std::size_t cols = rows + rng.below(7 - rows);
    std::vector<double> cost(rows * cols);
    for (double& v : cost) v = trial % 3 == 0 ? static_cast<double>(rng.below(4)) : rng.uniform();
    const std::vector<int> got = hungarian(cost, rows, cols);
    const double best = oracle::assignment_brute_force(cost, rows, cols);
    CHECK(matched_cost(cost, cols, got) == doctest::Approx(best).epsilon(1e-12));
    std::vector<int> used = got;
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  }
}

TEST_CASE("Hungarian with more rows than columns") {
  const std::vector<double> cost{5, 1, 1, 5, 0, 9};  // 3 x 2
  const std::vector<int> m = hungarian(cost, 3, 2);
  CHECK(m == std::vector<int>{1, -1, 0});
}

TEST_CASE("identical matrices align at zero") {
  Rng rng(2);
  const CompositionMatrix t = random_matrix(rng, 6, 4);
  const NicheAlignment a = align_niches(t, t);
  CHECK(a.weighted_mean_jsd == 0.0);
  std::vector<int> identity(6);
  std::iota(identity.begin(), identity.end(), 0);
  CHECK(a.matching == identity);
  CHECK(a.excluded_pairs.empty());
}

TEST_CASE("alignment equals exhaustive search for small K") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t kt = 1 + rng.below(6), km = 1 + rng.below(6);
    const CompositionMatrix t = random_matrix(rng, kt, 5), m = random_matrix(rng, km, 5);
    for (AlignmentCost mode : {AlignmentCost::kTeacherWeighted, AlignmentCost::kUnweighted}) {
      const NicheAlignment a = align_niches(t, m, mode);
      // Exhaustive over injective maps of the smaller side.
      std::vector<double> cost(kt * km);
      for (std::size_t i = 0; i < kt; ++i) {
        for (std::size_t j = 0; j < km; ++j) {
          const double d = jsd(t.row(i), m.row(j));
          cost[i * km + j] = mode == AlignmentCost::kTeacherWeighted ? t.weights[i] * d : d;
        }
      }
      double best;
      if (kt <= km) {
        best = oracle::assignment_brute_force(cost, kt, km);
      } else {
        std::vector<double> tr(km * kt);
        for (std::size_t i = 0; i < kt; ++i) {
          for (std::size_t j = 0; j < km; ++j) tr[j * kt + i] = cost[i * km + j];
        }
        best = oracle::assignment_brute_force(tr, km, kt);
      }
      CHECK(matched_cost(cost, km, a.matching) == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("method niche order does not change the score") {
  Rng rng(8);
  const CompositionMatrix t = random_matrix(rng, 5, 4), m = random_matrix(rng, 5, 4);
  std::vector<int> perm{3, 0, 4, 1, 2};
  const double base = align_niches(t, m).weighted_mean_jsd;
  CHECK(align_niches(t, permuted(m, perm)).weighted_mean_jsd == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("empty niches are excluded and matched last") {
  Rng rng(12);
  CompositionMatrix t = random_matrix(rng, 4, 3);
  const CompositionMatrix m = permuted(t, {2, 0, 3, 1});
  // Teacher niche 3 is empty: uniform row, zero weight.
  t.empty[3] = 1;
  t.weights[3] = 0.0;
  std::fill_n(t.rows.begin() + 9, 3, 1.0 / 3.0);
  double w = 0.0;
  for (double v : t.weights) w += v;
  for (double& v : t.weights) v /= w;
  const NicheAlignment a = align_niches(t, m);
  CHECK(a.matching[0] == 1);
  CHECK(a.matching[1] == 3);
  CHECK(a.matching[2] == 0);
  CHECK(a.excluded_pairs.size() == 1);
  CHECK(a.excluded_pairs[0].first == 3);
}

TEST_CASE("permutation test") {
  SUBCASE("single niche") {
    Rng rng(1);
    const CompositionMatrix t = random_matrix(rng, 1, 3);
    const NicheAlignment a = align_niches(t, t);
    CHECK(permutation_test(t, t, a, 500, 3) == 1.0);
  }
  SUBCASE("identical distinct rows hit the identity about once per K! draws") {
    Rng rng(4);
    const CompositionMatrix t = random_matrix(rng, 3, 4);
    const NicheAlignment a = align_niches(t, t);
    const double f = permutation_test(t, t, a, 10000, 9);
    CHECK(std::abs(f - 1.0 / 6.0) < 4.0 * std::sqrt((1.0 / 6.0) * (5.0 / 6.0) / 10000.0));
  }
  SUBCASE("strongly matched K=10 pair") {
    Rng rng(10);
    CompositionMatrix t;
    t.n_niches = 10;
    t.n_types = 10;
    t.rows.assign(100, 0.01);
    t.weights.assign(10, 0.1);
    t.empty.assign(10, 0);
    for (std::size_t k = 0; k < 10; ++k) t.rows[k * 10 + k] = 0.91;
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    CompositionMatrix m = permuted(t, perm);
    for (double& v : m.rows) v = 0.9 * v + 0.01;  // noisy copy, rows still sum to 1
    const NicheAlignment a = align_niches(t, m);
    const double f = permutation_test(t, m, a, 10000, 6);
    CHECK(f < 0.0002);
    CHECK(f >= 0.0);
  }
  SUBCASE("fraction stays in [0, 1]") {
    Rng rng(14);
    for (int i = 0; i < 10; ++i) {
      const CompositionMatrix t = random_matrix(rng, 4, 3), m = random_matrix(rng, 3, 3);
      const double f = permutation_test(t, m, align_niches(t, m), 300, static_cast<std::uint64_t>(i));
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }
  CHECK_THROWS_AS(
      [] {
        Rng rng(1);
        const CompositionMatrix t = random_matrix(rng, 2, 2);
        permutation_test(t, t, align_niches(t, t), 0, 1);
      }(),
      Error);
}

TEST_CASE("vocabularies must agree") {
  Rng rng(3);
  const CompositionMatrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 5);
  CHECK(testutil::error_code_of([&] { align_niches(a, b); }) == ErrorCode::kShapeMismatch);
}
