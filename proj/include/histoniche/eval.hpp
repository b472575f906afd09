// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "histoniche/core_data.hpp"

namespace histoniche::eval {

// ---------------------------------------------------------------------------
// Clustering agreement
// ---------------------------------------------------------------------------

struct ContingencyTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int64_t> counts;  // rows x cols, row-major
  std::vector<std::int64_t> row_sums;
  std::vector<std::int64_t> col_sums;
  std::int64_t n = 0;

  std::int64_t at(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
};

// Labels are arbitrary non-negative integers; they are compacted internally.
ContingencyTable contingency(std::span<const int> labels_a, std::span<const int> labels_b);

// Adjusted Rand index. Returns 1.0 when the chance-adjusted denominator
// vanishes (both partitions all-in-one or both all-singletons).
double ari(std::span<const int> labels_a, std::span<const int> labels_b);

// Mutual information over the arithmetic mean of the two entropies (nats
// cancel). Defined as 0 with a warning when both labelings are constant.
double nmi(std::span<const int> labels_a, std::span<const int> labels_b);

// ---------------------------------------------------------------------------
// Compositions and alignment
// ---------------------------------------------------------------------------

// Base-2 Jensen-Shannon divergence in [0, 1]. Inputs must each sum to 1
// within 1e-9.
double jsd(std::span<const double> p, std::span<const double> q);

struct CompositionMatrix {
  std::size_t n_niches = 0;
  std::size_t n_types = 0;
  std::vector<double> rows;       // n_niches x n_types
  std::vector<double> weights;    // niche size / n
  std::vector<std::uint8_t> empty;

  std::span<const double> row(std::size_t k) const { return {rows.data() + k * n_types, n_types}; }
};

// Per-niche empirical cell-type distribution. Cells with a negative label or
// missing type are skipped. Empty niches get a uniform row and their flag set.
CompositionMatrix composition(std::span<const int> labels, std::span<const int> cell_types,
                              std::size_t n_niches, std::size_t n_types);

struct NicheAlignment {
  // matching[t] = method niche paired with teacher niche t, or -1.
  std::vector<int> matching;
  std::vector<double> pair_jsd;   // per teacher niche, NaN when unmatched
  double weighted_mean_jsd = 0.0;
  double permutation_fraction = 1.0;  // filled by permutation_test
  // Matched pairs where either side is an empty niche; left out of the
  // weighted mean and reported here instead.
  std::vector<std::pair<int, int>> excluded_pairs;
};

enum class AlignmentCost { kTeacherWeighted, kUnweighted };

// Hungarian matching on cost[t][m] = w_t * jsd(teacher_t, method_m). Pairs
// with an empty side are only used once every scorable pair is taken.
NicheAlignment align_niches(const CompositionMatrix& teacher, const CompositionMatrix& method,
                            AlignmentCost cost = AlignmentCost::kTeacherWeighted);

// Weighted mean JSD for an arbitrary one-to-one pairing (same exclusion rule).
double pairing_score(const CompositionMatrix& teacher, const CompositionMatrix& method,
                     std::span<const int> matching);

// Fraction of n_draws uniform random one-to-one pairings whose weighted mean
// JSD is <= the aligned score.
double permutation_test(const CompositionMatrix& teacher, const CompositionMatrix& method,
                        const NicheAlignment& alignment, std::size_t n_draws,
                        std::uint64_t seed);

// Minimum-cost assignment on a rows x cols matrix (row-major). Returns, per
// row, the assigned column or -1 when rows > cols.
std::vector<int> hungarian(std::span<const double> cost, std::size_t rows, std::size_t cols);

// ---------------------------------------------------------------------------
// k-means baseline
// ---------------------------------------------------------------------------

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;       // k x dim
  std::vector<int> labels;             // for the fitted rows
  double inertia = 0.0;
  std::vector<double> inertia_trace;   // per Lloyd iteration of the best restart
};

struct KMeansOptions {
  std::size_t n_init = 4;
  std::size_t max_iter = 100;
  std::uint64_t seed = 0;
};

// k-means++ seeding, Lloyd iterations, best of n_init restarts by inertia.
KMeansModel kmeans_fit(std::span<const double> data, std::size_t n, std::size_t dim,
                       std::size_t k, const KMeansOptions& options);
std::vector<int> kmeans_assign(const KMeansModel& model, std::span<const double> data,
                               std::size_t n);

// Fits on the cells where fit_mask != 0 and labels every cell by nearest
// centroid.
std::vector<int> kmeans_baseline(const CellTable& cells, std::span<const std::uint8_t> fit_mask,
                                 std::size_t k, const KMeansOptions& options);

// ---------------------------------------------------------------------------
// Pathology probe
// ---------------------------------------------------------------------------

struct F1Report {
  double macro_f1 = 0.0;
  std::vector<double> per_class;
  std::vector<std::string> warnings;
};

// Unweighted mean of per-class F1 over classes [0, n_classes). Classes with
// no true members score 0 and add a warning.
F1Report macro_f1(std::span<const int> truth, std::span<const int> predicted, int n_classes);

struct ProbeOptions {
  double c_reg = 1.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
};

// One-vs-rest linear SVM (hinge + L2, Pegasos sub-gradient steps).
class LinearSvm {
 public:
  void fit(std::span<const double> features, std::size_t n, std::size_t dim,
           std::span<const int> labels, int n_classes, const ProbeOptions& options);
  int predict(std::span<const double> x) const;
  std::span<const double> weights(int cls) const {
    return {weights_.data() + static_cast<std::size_t>(cls) * (dim_ + 1), dim_ + 1};
  }

 private:
  std::size_t dim_ = 0;
  int n_classes_ = 0;
  std::vector<double> weights_;  // per class: dim weights then bias
};

struct ProbeResult {
  F1Report f1;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

// Features are one-hot niche indicators. pathology[i] < 0 excludes the cell.
ProbeResult svm_probe(std::span<const int> niche_labels, std::size_t n_niches,
                      std::span<const int> pathology, int n_classes,
                      std::span<const std::uint8_t> train_mask,
                      std::span<const std::uint8_t> test_mask, const ProbeOptions& options);

// Same probe on dense per-cell features (n x dim), e.g. niche logits.
ProbeResult svm_probe_features(std::span<const double> features, std::size_t dim,
                               std::span<const int> pathology, int n_classes,
                               std::span<const std::uint8_t> train_mask,
                               std::span<const std::uint8_t> test_mask,
                               const ProbeOptions& options);

}  // namespace histoniche::eval
