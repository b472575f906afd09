// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "histoniche/error.hpp"
#include "histoniche/eval.hpp"
#include "histoniche/rng.hpp"

namespace histoniche::eval {

F1Report macro_f1(std::span<const int> truth, std::span<const int> predicted, int n_classes) {
  if (truth.size() != predicted.size()) fail(ErrorCode::kShapeMismatch, "truth/prediction length mismatch");
  if (n_classes <= 0) fail(ErrorCode::kInvalidArgument, "n_classes must be positive");
  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
      fail(ErrorCode::kInvalidArgument, "class label outside [0, n_classes)");
    }
    if (t == p) {
      tp[static_cast<std::size_t>(t)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(p)] += 1.0;
      fn[static_cast<std::size_t>(t)] += 1.0;
    }
  }
  F1Report r;
  r.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (tp[c] + fn[c] == 0.0) {
      r.warnings.push_back("class " + std::to_string(c) + " absent from evaluation set; F1 = 0");
      r.per_class[c] = 0.0;
      continue;
    }
    r.per_class[c] = 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn[c]);
  }
  r.macro_f1 = std::accumulate(r.per_class.begin(), r.per_class.end(), 0.0) / static_cast<double>(k);
  return r;
}

void LinearSvm::fit(std::span<const double> features, std::size_t n, std::size_t dim,
                    std::span<const int> labels, int n_classes, const ProbeOptions& options) {
  if (features.size() != n * dim || labels.size() != n) {
    fail(ErrorCode::kShapeMismatch, "SVM training data shape mismatch");
  }
  if (!(options.c_reg > 0.0)) fail(ErrorCode::kInvalidArgument, "C must be positive");
  if (n == 0) fail(ErrorCode::kInvalidArgument, "SVM needs training samples");
  dim_ = dim;
  n_classes_ = n_classes;
  const std::size_t stride = dim + 1;
  weights_.assign(static_cast<std::size_t>(n_classes) * stride, 0.0);

  const double lambda = 1.0 / (options.c_reg * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int cls = 0; cls < n_classes; ++cls) {
    double* w = weights_.data() + static_cast<std::size_t>(cls) * stride;
    Rng rng(Rng::derive_seed(options.seed, static_cast<std::uint64_t>(cls)));
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < std::max<std::size_t>(options.epochs, 1); ++epoch) {
      rng.shuffle(order);
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double* x = features.data() + i * dim;
        const double y = labels[i] == cls ? 1.0 : -1.0;
        double score = w[dim];
        for (std::size_t d = 0; d < dim; ++d) score += w[d] * x[d];
        const double shrink = 1.0 - eta * lambda;
        for (std::size_t d = 0; d <= dim; ++d) w[d] *= shrink;
        if (y * score < 1.0) {
          for (std::size_t d = 0; d < dim; ++d) w[d] += eta * y * x[d];
          w[dim] += eta * y;
        }
        double norm2 = 0.0;
        for (std::size_t d = 0; d <= dim; ++d) norm2 += w[d] * w[d];
        if (norm2 > radius * radius) {
          const double s = radius / std::sqrt(norm2);
          for (std::size_t d = 0; d <= dim; ++d) w[d] *= s;
        }
      }
    }
  }
}

int LinearSvm::predict(std::span<const double> x) const {
  const std::size_t stride = dim_ + 1;
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int cls = 0; cls < n_classes_; ++cls) {
    const double* w = weights_.data() + static_cast<std::size_t>(cls) * stride;
    double s = w[dim_];
    for (std::size_t d = 0; d < dim_; ++d) s += w[d] * x[d];
    if (s > best_score) {
      best_score = s;
      best = cls;
    }
  }
  return best;
}

ProbeResult svm_probe_features(std::span<const double> features, std::size_t dim,
                               std::span<const int> pathology, int n_classes,
                               std::span<const std::uint8_t> train_mask,
                               std::span<const std::uint8_t> test_mask,
                               const ProbeOptions& options) {
  const std::size_t n = pathology.size();
  if (features.size() != n * dim || train_mask.size() != n || test_mask.size() != n) {
    fail(ErrorCode::kShapeMismatch, "probe inputs differ in length");
  }
  std::vector<double> train_x, test_x;
  std::vector<int> train_y, test_y;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(std::max(n_classes, 0)), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = pathology[i];
    if (y < 0) continue;
    if (y >= n_classes) fail(ErrorCode::kInvalidArgument, "pathology code outside the class set");
    const auto row = features.subspan(i * dim, dim);
    if (train_mask[i]) {
      train_x.insert(train_x.end(), row.begin(), row.end());
      train_y.push_back(y);
      seen[static_cast<std::size_t>(y)] = 1;
    } else if (test_mask[i]) {
      test_x.insert(test_x.end(), row.begin(), row.end());
      test_y.push_back(y);
    }
  }
  if (std::count(seen.begin(), seen.end(), 1) < 2) {
    fail(ErrorCode::kInvalidArgument, "probe needs >= 2 pathology classes in the training set");
  }
  if (test_y.empty()) fail(ErrorCode::kInvalidArgument, "probe has no labeled test cells");

  LinearSvm svm;
  svm.fit(train_x, train_y.size(), dim, train_y, n_classes, options);
  std::vector<int> predicted(test_y.size());
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    predicted[i] = svm.predict(std::span<const double>(test_x).subspan(i * dim, dim));
  }
  ProbeResult r;
  r.f1 = macro_f1(test_y, predicted, n_classes);
  for (const auto& w : r.f1.warnings) warn("probe: " + w);
  r.n_train = train_y.size();
  r.n_test = test_y.size();
  return r;
}

ProbeResult svm_probe(std::span<const int> niche_labels, std::size_t n_niches,
                      std::span<const int> pathology, int n_classes,
                      std::span<const std::uint8_t> train_mask,
                      std::span<const std::uint8_t> test_mask, const ProbeOptions& options) {
  const std::size_t n = niche_labels.size();
  if (pathology.size() != n) fail(ErrorCode::kShapeMismatch, "probe inputs differ in length");
  std::vector<double> onehot(n * n_niches, 0.0);
  std::vector<int> usable(pathology.begin(), pathology.end());
  for (std::size_t i = 0; i < n; ++i) {
    const int k = niche_labels[i];
    if (k < 0) {
      usable[i] = -1;
      continue;
    }
    if (static_cast<std::size_t>(k) >= n_niches) fail(ErrorCode::kInvalidArgument, "niche label out of range");
    onehot[i * n_niches + static_cast<std::size_t>(k)] = 1.0;
  }
  return svm_probe_features(onehot, n_niches, usable, n_classes, train_mask, test_mask, options);
}

}  // namespace histoniche::eval
