// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "histoniche/eval.hpp"
#include "histoniche/rng.hpp"
#include "test_helpers.hpp"

using namespace histoniche;
using namespace histoniche::eval;

TEST_CASE("k equal to n gives zero inertia") {
  Rng rng(1);
  std::vector<double> data(12 * 3);
  for (double& v : data) v = rng.normal();
  const KMeansModel m = kmeans_fit(data, 12, 3, 12, {});
  CHECK(m.inertia == 0.0);
  std::vector<int> labels = m.labels;
  std::sort(labels.begin(), labels.end());
  CHECK(std::adjacent_find(labels.begin(), labels.end()) == labels.end());
}

TEST_CASE("two separated blobs") {
  Rng rng(2);
  const std::size_t n = 400;
  std::vector<double> data(n * 2);
  std::vector<int> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = i < n / 2 ? 0 : 1;
    data[2 * i] = (truth[i] ? 20.0 : 0.0) + rng.normal();
    data[2 * i + 1] = rng.normal();
  }
  const KMeansModel m = kmeans_fit(data, n, 2, 2, {});
  CHECK(ari(m.labels, truth) == 1.0);
  CHECK(kmeans_assign(m, data, n) == m.labels);
}

TEST_CASE("Lloyd inertia never increases") {
  Rng rng(3);
  const std::size_t n = 600;
  std::vector<double> data(n * 4);
  for (double& v : data) v = rng.normal();
  KMeansOptions opts;
  opts.n_init = 3;
  opts.seed = 9;
  const KMeansModel m = kmeans_fit(data, n, 4, 7, opts);
  REQUIRE(m.inertia_trace.size() >= 2);
  for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) {
    CHECK(m.inertia_trace[i] <= m.inertia_trace[i - 1] * (1.0 + 1e-12));
  }
  const KMeansModel again = kmeans_fit(data, n, 4, 7, opts);
  CHECK(again.labels == m.labels);
  CHECK(again.inertia == m.inertia);
}

TEST_CASE("k-means errors and the baseline helper") {
  std::vector<double> data{0, 1, 2};
  CHECK_THROWS_AS(kmeans_fit(data, 3, 1, 4, {}), Error);
  CHECK_THROWS_AS(kmeans_fit(data, 3, 1, 0, {}), Error);
  const CellTable cells = testutil::random_table(50, 10, 10, 4, 3);
  CellMask fit(50, 0);
  for (std::size_t i = 0; i < 25; ++i) fit[i] = 1;
  const std::vector<int> labels = kmeans_baseline(cells, fit, 3, {});
  CHECK(labels.size() == 50);
  for (int l : labels) CHECK((l >= 0 && l < 3));
}

TEST_CASE("macro F1 by direct per-class computation") {
  // Three balanced classes, every prediction is class 0: F1_0 = 2*(1/3*1)/(1/3+1) = 1/2, others 0.
  const std::vector<int> truth{0, 1, 2, 0, 1, 2, 0, 1, 2};
  const std::vector<int> all_zero(9, 0);
  const F1Report r = macro_f1(truth, all_zero, 3);
  CHECK(r.per_class[0] == doctest::Approx(0.5));
  CHECK(r.per_class[1] == 0.0);
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 6.0));
  CHECK(r.warnings.empty());

  CHECK(macro_f1(truth, truth, 3).macro_f1 == 1.0);
  const F1Report absent = macro_f1(std::vector<int>{0, 0, 1}, std::vector<int>{0, 0, 1}, 3);
  CHECK(absent.warnings.size() == 1);
  CHECK(absent.macro_f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("probe is perfect when niches determine pathology") {
  Rng rng(5);
  const std::size_t n = 900;
  std::vector<int> niche(n), pathology(n);
  CellMask train(n), test(n);
  for (std::size_t i = 0; i < n; ++i) {
    niche[i] = static_cast<int>(rng.below(6));
    pathology[i] = niche[i] % 3;
    train[i] = i % 4 != 1;
    test[i] = i % 4 == 1;
  }
  const ProbeResult r = svm_probe(niche, 6, pathology, 3, train, test, {});
  CHECK(r.f1.macro_f1 == 1.0);
  CHECK(r.n_train + r.n_test == n);
}

TEST_CASE("probe sits inside the chance band under independence") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const std::size_t n = 3000;
    std::vector<int> niche(n), pathology(n);
    CellMask train(n), test(n);
    for (std::size_t i = 0; i < n; ++i) {
      niche[i] = static_cast<int>(rng.below(8));
      pathology[i] = static_cast<int>(rng.below(3));
      train[i] = i % 4 != 1;
      test[i] = i % 4 == 1;
    }
    ProbeOptions opts;
    opts.seed = seed;
    const ProbeResult r = svm_probe(niche, 8, pathology, 3, train, test, opts);

    // Rebuild the probe's test predictions, then shuffle the truth against
    // them to get the null distribution of macro-F1.
    std::vector<double> x_train, x_test;
    std::vector<int> y_train, y_test;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(8, 0.0);
      row[static_cast<std::size_t>(niche[i])] = 1.0;
      if (train[i]) {
        x_train.insert(x_train.end(), row.begin(), row.end());
        y_train.push_back(pathology[i]);
      } else {
        x_test.insert(x_test.end(), row.begin(), row.end());
        y_test.push_back(pathology[i]);
      }
    }
    LinearSvm svm;
    svm.fit(x_train, y_train.size(), 8, y_train, 3, opts);
    std::vector<int> predicted(y_test.size());
    for (std::size_t i = 0; i < y_test.size(); ++i) {
      predicted[i] = svm.predict(std::span<const double>(x_test).subspan(i * 8, 8));
    }
    REQUIRE(macro_f1(y_test, predicted, 3).macro_f1 == r.f1.macro_f1);

    std::vector<double> null;
    std::vector<int> shuffled = y_test;
    Rng perm(7 + seed);
    for (int draw = 0; draw < 2000; ++draw) {
      perm.shuffle(shuffled);
      null.push_back(macro_f1(shuffled, predicted, 3).macro_f1);
    }
    std::sort(null.begin(), null.end());
    const double lo = null[5], hi = null[1994];  // central 99.5%
    CHECK(r.f1.macro_f1 >= lo);
    CHECK(r.f1.macro_f1 <= hi);
    CHECK(r.f1.macro_f1 < 0.45);
  }
}

TEST_CASE("probe input errors") {
  const std::vector<int> niche{0, 1, 0, 1}, one_class{0, 0, 0, 0};
  const CellMask train{1, 1, 0, 0}, test{0, 0, 1, 1};
  CHECK_THROWS_AS(svm_probe(niche, 2, one_class, 2, train, test, {}), Error);
  CHECK_THROWS_AS(svm_probe(niche, 1, std::vector<int>{0, 1, 0, 1}, 2, train, test, {}), Error);
}
