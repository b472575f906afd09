// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>
#include <string>

#include "histoniche/render.hpp"
#include "histoniche/splitter.hpp"
#include "test_helpers.hpp"

using namespace histoniche;

namespace {

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

CellTable four_cells() {
  std::vector<CellRecord> r(4);
  const double xy[4][2] = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  for (std::size_t i = 0; i < 4; ++i) {
    r[i].id = "c" + std::to_string(i);
    r[i].x_um = xy[i][0];
    r[i].y_um = xy[i][1];
    r[i].embedding = {0.0};
  }
  return CellTable::from_records(r);
}

}  // namespace

TEST_CASE("palette has distinct colors") {
  const auto& p = niche_palette();
  std::set<std::string> seen(p.begin(), p.end());
  CHECK(seen.size() == kPaletteSize);
  for (const char* c : p) CHECK(std::string(c).size() == 7);
}

TEST_CASE("four cells, two niches") {
  const CellTable cells = four_cells();
  const std::vector<int> labels{0, 1, 1, 0};
  const std::string svg = niche_map_svg(cells, labels, 2);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(occurrences(svg, "class=\"cell\"") == 4);
  CHECK(occurrences(svg, "class=\"legend-entry\"") == 2);
  CHECK(occurrences(svg, niche_palette()[0]) >= 3);
  CHECK(occurrences(svg, "strip-boundary") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("split overlay") {
  const CellTable cells = testutil::random_table(400, 300, 600, 2, 1);
  const SplitAssignment split = make_split(cells, {});
  std::vector<int> labels(cells.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = split.tags[i] == SplitTag::kDiscarded ? -1 : static_cast<int>(i % 3);
  }
  const std::string svg = niche_map_svg(cells, labels, 3, &split);
  CHECK(occurrences(svg, "class=\"strip-boundary\"") == 3);
  CHECK(occurrences(svg, "class=\"buffer-band\"") == 2);
  CHECK(occurrences(svg, "#c8c8c8") >= 1);
}

TEST_CASE("identical inputs give identical bytes") {
  const CellTable cells = testutil::random_table(300, 100, 100, 3, 1);
  std::vector<int> labels(cells.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 25);
  RenderOptions opts;
  opts.title = "run <1> & co";
  const std::string a = niche_map_svg(cells, labels, 25, nullptr, opts);
  CHECK(a == niche_map_svg(cells, labels, 25, nullptr, opts));
  CHECK(a.find("run &lt;1&gt; &amp; co") != std::string::npos);
  CHECK(niche_map_ppm(cells, labels, 25) == niche_map_ppm(cells, labels, 25));

  const std::string path = testutil::temp_path("map.svg");
  write_file(path, a);
  CHECK(testutil::read_text(path) == a);
}

TEST_CASE("raster header") {
  const CellTable cells = four_cells();
  const std::vector<int> labels{0, 1, 1, 0};
  const std::string ppm = niche_map_ppm(cells, labels, 2);
  CHECK(ppm.rfind("P6\n", 0) == 0);
}

TEST_CASE("label range is checked") {
  const CellTable cells = four_cells();
  CHECK_THROWS_AS(niche_map_svg(cells, std::vector<int>{0, 1, 2, 0}, 2), Error);
  CHECK_THROWS_AS(niche_map_svg(cells, std::vector<int>{0, 1}, 2), Error);
}
