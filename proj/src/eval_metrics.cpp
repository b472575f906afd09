// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "histoniche/error.hpp"
#include "histoniche/eval.hpp"

namespace histoniche::eval {

namespace {

void check_pair(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kShapeMismatch, "label length mismatch: " + std::to_string(a.size()) +
                                        " vs " + std::to_string(b.size()));
  }
  if (a.size() < 2) fail(ErrorCode::kInvalidArgument, "need at least 2 labeled items");
}

std::vector<std::size_t> compact(std::span<const int> labels, std::size_t& n_distinct) {
  std::unordered_map<int, std::size_t> codes;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) fail(ErrorCode::kInvalidArgument, "negative cluster label");
    auto [it, inserted] = codes.emplace(labels[i], codes.size());
    out[i] = it->second;
  }
  n_distinct = codes.size();
  return out;
}

double choose2(double v) { return v * (v - 1.0) / 2.0; }

double entropy(std::span<const std::int64_t> sums, double n) {
  double h = 0.0;
  for (std::int64_t s : sums) {
    if (s > 0) {
      const double p = static_cast<double>(s) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace

ContingencyTable contingency(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) {
    fail(ErrorCode::kShapeMismatch, "label length mismatch");
  }
  ContingencyTable t;
  const auto a = compact(labels_a, t.rows);
  const auto b = compact(labels_b, t.cols);
  t.counts.assign(t.rows * t.cols, 0);
  t.row_sums.assign(t.rows, 0);
  t.col_sums.assign(t.cols, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++t.counts[a[i] * t.cols + b[i]];
    ++t.row_sums[a[i]];
    ++t.col_sums[b[i]];
  }
  t.n = static_cast<std::int64_t>(a.size());
  return t;
}

double ari(std::span<const int> labels_a, std::span<const int> labels_b) {
  check_pair(labels_a, labels_b);
  const ContingencyTable t = contingency(labels_a, labels_b);
  double index = 0.0;
  for (std::int64_t c : t.counts) index += choose2(static_cast<double>(c));
  double sum_a = 0.0;
  for (std::int64_t s : t.row_sums) sum_a += choose2(static_cast<double>(s));
  double sum_b = 0.0;
  for (std::int64_t s : t.col_sums) sum_b += choose2(static_cast<double>(s));
  const double expected = sum_a * sum_b / choose2(static_cast<double>(t.n));
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double nmi(std::span<const int> labels_a, std::span<const int> labels_b) {
  check_pair(labels_a, labels_b);
  const ContingencyTable t = contingency(labels_a, labels_b);
  const double n = static_cast<double>(t.n);
  const double ha = entropy(t.row_sums, n);
  const double hb = entropy(t.col_sums, n);
  const double mean_h = 0.5 * (ha + hb);
  if (mean_h <= 0.0) {
    warn("NMI undefined for two single-class labelings; reporting 0");
    return 0.0;
  }
  double mi = 0.0;
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols; ++c) {
      const std::int64_t nij = t.at(r, c);
      if (nij == 0) continue;
      const double p = static_cast<double>(nij) / n;
      mi += p * std::log(n * static_cast<double>(nij) /
                         (static_cast<double>(t.row_sums[r]) * static_cast<double>(t.col_sums[c])));
    }
  }
  return std::clamp(mi / mean_h, 0.0, 1.0);
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorCode::kShapeMismatch, "distribution length mismatch");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0)) {
      fail(ErrorCode::kInvalidArgument, "distribution has a negative or non-finite entry");
    }
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    fail(ErrorCode::kInvalidArgument, "distribution does not sum to 1");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) d += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) d += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::clamp(d, 0.0, 1.0);
}

CompositionMatrix composition(std::span<const int> labels, std::span<const int> cell_types,
                              std::size_t n_niches, std::size_t n_types) {
  if (labels.size() != cell_types.size()) {
    fail(ErrorCode::kShapeMismatch, "labels and cell types differ in length");
  }
  if (n_niches == 0 || n_types == 0) {
    fail(ErrorCode::kInvalidArgument, "composition needs >= 1 niche and >= 1 cell type");
  }
  CompositionMatrix m;
  m.n_niches = n_niches;
  m.n_types = n_types;
  std::vector<double> counts(n_niches * n_types, 0.0);
  std::vector<double> sizes(n_niches, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    const int c = cell_types[i];
    if (k < 0 || c < 0) continue;
    if (static_cast<std::size_t>(k) >= n_niches || static_cast<std::size_t>(c) >= n_types) {
      fail(ErrorCode::kInvalidArgument, "label or cell type outside the declared range");
    }
    counts[static_cast<std::size_t>(k) * n_types + static_cast<std::size_t>(c)] += 1.0;
    sizes[static_cast<std::size_t>(k)] += 1.0;
    total += 1.0;
  }
  m.rows.assign(n_niches * n_types, 0.0);
  m.weights.assign(n_niches, 0.0);
  m.empty.assign(n_niches, 0);
  for (std::size_t k = 0; k < n_niches; ++k) {
    if (sizes[k] == 0.0) {
      m.empty[k] = 1;
      std::fill_n(m.rows.begin() + static_cast<std::ptrdiff_t>(k * n_types), n_types,
                  1.0 / static_cast<double>(n_types));
      continue;
    }
    for (std::size_t c = 0; c < n_types; ++c) {
      m.rows[k * n_types + c] = counts[k * n_types + c] / sizes[k];
    }
    m.weights[k] = total > 0.0 ? sizes[k] / total : 0.0;
  }
  return m;
}

}  // namespace histoniche::eval
