// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "histoniche/splitter.hpp"
#include "test_helpers.hpp"

using namespace histoniche;

TEST_CASE("buffer width is half the crop edge") {
  CHECK(buffer_width_um(224, 0.274) == doctest::Approx(30.688).epsilon(1e-12));
  CHECK(buffer_width_um(224, 0.137) == doctest::Approx(15.344).epsilon(1e-12));
  CHECK(std::abs(buffer_width_um(224, 0.137) - 15.3) < 0.05);
  CHECK_THROWS_AS(buffer_width_um(0, 0.274), Error);
  CHECK_THROWS_AS(buffer_width_um(224, 0.0), Error);
}

TEST_CASE("area fractions on a uniform field") {
  const double w = 2000.0, h = 8000.0;
  const CellTable cells = testutil::random_table(40000, w, h, 11, 1);
  const SplitAssignment split = make_split(cells, {});
  REQUIRE(split.tags.size() == cells.size());

  const double height = cells.bounds().height();
  for (int s = 0; s < 3; ++s) {
    CHECK(split.strip_boundaries_um[static_cast<std::size_t>(s)] ==
          doctest::Approx(cells.bounds().min_y + (s + 1) * height / 4.0));
  }
  const double n = static_cast<double>(cells.size());
  const double b = split.buffer_um / height;
  const double test_fraction = static_cast<double>(split.count(SplitTag::kTest)) / n;
  const double discard_fraction = static_cast<double>(split.count(SplitTag::kDiscarded)) / n;
  CHECK(std::abs(test_fraction - 0.25) < 0.02);
  // Two guarded boundaries, each with a band of 2 * buffer.
  CHECK(test_fraction == doctest::Approx(0.25 - 2.0 * b).epsilon(0.03));
  CHECK(discard_fraction == doctest::Approx(4.0 * b).epsilon(0.15));
}

TEST_CASE("train and test centroids stay a buffer apart") {
  for (int test_strip = 0; test_strip < 4; ++test_strip) {
    const CellTable cells = testutil::random_table(3000, 300, 900, 20 + test_strip, 1);
    SplitOptions opts;
    opts.test_strip = test_strip;
    const SplitAssignment split = make_split(cells, opts);
    const SplitMasks masks = split_masks(split);
    double closest = INFINITY;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!masks.train[i]) continue;
      for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!masks.test[j]) continue;
        closest = std::min(closest, std::hypot(cells.x(i) - cells.x(j), cells.y(i) - cells.y(j)));
      }
    }
    CHECK(closest >= split.buffer_um);
  }
}

TEST_CASE("only boundaries next to the test strip discard cells") {
  const CellTable cells = testutil::random_table(20000, 500, 4000, 4, 1);
  const SplitAssignment split = make_split(cells, {});  // test strip 1
  const double line = split.strip_boundaries_um[2];
  std::size_t near_train_train = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (std::abs(cells.y(i) - line) <= split.buffer_um) {
      ++near_train_train;
      CHECK(split.tags[i] == SplitTag::kTrain);
    }
  }
  CHECK(near_train_train > 0);
}

TEST_CASE("x axis strips") {
  const CellTable cells = testutil::random_table(5000, 4000, 500, 8, 1);
  SplitOptions opts;
  opts.axis = StripAxis::kX;
  const SplitAssignment split = make_split(cells, opts);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (split.tags[i] == SplitTag::kTest) {
      CHECK(cells.x(i) > split.strip_boundaries_um[0] + split.buffer_um);
      CHECK(cells.x(i) < split.strip_boundaries_um[1] - split.buffer_um);
    }
  }
}

TEST_CASE("masks") {
  const CellTable cells = testutil::random_table(2000, 300, 600, 5, 1);
  const SplitAssignment split = make_split(cells, {});
  const SplitMasks m = split_masks(split);
  std::size_t trues = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK_FALSE((m.train[i] && m.test[i]));
    if (split.tags[i] == SplitTag::kDiscarded) CHECK((!m.train[i] && !m.test[i]));
    trues += m.train[i] + m.test[i];
  }
  CHECK(trues == cells.size() - split.count(SplitTag::kDiscarded));
}

TEST_CASE("split errors and tag names") {
  CHECK_THROWS_AS(make_split(CellTable{}, {}), Error);
  std::vector<CellRecord> flat(3);
  for (int i = 0; i < 3; ++i) {
    flat[static_cast<std::size_t>(i)].id = std::to_string(i);
    flat[static_cast<std::size_t>(i)].x_um = i;
    flat[static_cast<std::size_t>(i)].embedding = {0.0};
  }
  const CellTable line = CellTable::from_records(flat);
  CHECK_THROWS_AS(make_split(line, {}), Error);
  SplitOptions bad;
  bad.test_strip = 4;
  CHECK_THROWS_AS(make_split(testutil::random_table(10, 10, 10, 1), bad), Error);
  for (SplitTag t : {SplitTag::kTrain, SplitTag::kTest, SplitTag::kDiscarded}) {
    CHECK(parse_split_tag(split_tag_name(t)) == t);
  }
  CHECK_THROWS_AS(parse_split_tag("validation"), Error);
}

TEST_CASE("deterministic") {
  const CellTable cells = testutil::random_table(1000, 100, 400, 6, 1);
  CHECK(make_split(cells, {}).tags == make_split(cells, {}).tags);
}
