// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include "histoniche/error.hpp"
#include "histoniche/eval.hpp"
#include "histoniche/rng.hpp"

namespace histoniche::eval {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

// Nearest centroid, ties to the smaller index.
int nearest(const double* x, const std::vector<double>& centroids, std::size_t k, std::size_t dim,
            double* best_dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = sq_dist(x, centroids.data() + c * dim, dim);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

std::vector<double> seed_plus_plus(std::span<const double> data, std::size_t n, std::size_t dim,
                                   std::size_t k, Rng& rng) {
  std::vector<double> centroids;
  centroids.reserve(k * dim);
  std::vector<std::uint8_t> chosen(n, 0);
  auto add = [&](std::size_t i) {
    chosen[i] = 1;
    centroids.insert(centroids.end(), data.begin() + static_cast<std::ptrdiff_t>(i * dim),
                     data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  };
  add(rng.below(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(&data[i * dim], centroids.data(), dim);
  while (centroids.size() < k * dim) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every remaining point coincides with a centroid; take an unused one.
      std::size_t skip = rng.below(n);
      for (std::size_t off = 0; off < n; ++off) {
        const std::size_t i = (skip + off) % n;
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    add(pick);
    const double* c = centroids.data() + centroids.size() - dim;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(&data[i * dim], c, dim));
  }
  return centroids;
}

KMeansModel lloyd(std::span<const double> data, std::size_t n, std::size_t dim, std::size_t k,
                  std::vector<double> centroids, std::size_t max_iter) {
  KMeansModel m;
  m.k = k;
  m.dim = dim;
  m.labels.assign(n, -1);
  std::vector<double> dist(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> sizes(k);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(&data[i * dim], centroids, k, dim, &dist[i]);
      changed = changed || c != m.labels[i];
      m.labels[i] = c;
      inertia += dist[i];
    }
    m.inertia_trace.push_back(inertia);
    if (!changed && iter > 0) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(m.labels[i]);
      ++sizes[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += data[i * dim + d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i) {
          if (dist[i] > dist[far]) far = i;
        }
        std::copy_n(&data[far * dim], dim, &centroids[c * dim]);
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) {
        centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(sizes[c]);
      }
    }
  }
  m.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    m.labels[i] = nearest(&data[i * dim], centroids, k, dim, &d);
    m.inertia += d;
  }
  m.centroids = std::move(centroids);
  return m;
}

}  // namespace

KMeansModel kmeans_fit(std::span<const double> data, std::size_t n, std::size_t dim,
                       std::size_t k, const KMeansOptions& options) {
  if (dim == 0 || data.size() != n * dim) fail(ErrorCode::kShapeMismatch, "k-means data shape mismatch");
  if (k == 0) fail(ErrorCode::kInvalidArgument, "k-means needs k >= 1");
  if (k > n) {
    fail(ErrorCode::kInvalidArgument, "k-means: K=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  }
  KMeansModel best;
  bool have = false;
  for (std::size_t run = 0; run < std::max<std::size_t>(options.n_init, 1); ++run) {
    Rng rng(Rng::derive_seed(options.seed, run));
    KMeansModel m = lloyd(data, n, dim, k, seed_plus_plus(data, n, dim, k, rng), options.max_iter);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

std::vector<int> kmeans_assign(const KMeansModel& model, std::span<const double> data,
                               std::size_t n) {
  if (data.size() != n * model.dim) fail(ErrorCode::kShapeMismatch, "k-means data shape mismatch");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = nearest(&data[i * model.dim], model.centroids, model.k, model.dim, nullptr);
  }
  return labels;
}

std::vector<int> kmeans_baseline(const CellTable& cells, std::span<const std::uint8_t> fit_mask,
                                 std::size_t k, const KMeansOptions& options) {
  if (fit_mask.size() != cells.size()) fail(ErrorCode::kShapeMismatch, "fit mask length mismatch");
  const std::size_t dim = cells.embedding_dim();
  std::vector<double> fit_rows;
  std::size_t n_fit = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!fit_mask[i]) continue;
    auto e = cells.embedding(i);
    fit_rows.insert(fit_rows.end(), e.begin(), e.end());
    ++n_fit;
  }
  const KMeansModel model = kmeans_fit(fit_rows, n_fit, dim, k, options);
  return kmeans_assign(model, cells.embeddings(), cells.size());
}

}  // namespace histoniche::eval
