// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "histoniche/distill.hpp"
#include "histoniche/eval.hpp"
#include "histoniche/synth.hpp"
#include "test_helpers.hpp"

using namespace histoniche;

namespace {

std::vector<int> teacher_argmax(const CellTable& cells) {
  std::vector<int> out(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) out[i] = argmax(cells.teacher_logits(i));
  return out;
}

synth::SynthParams small(std::size_t n) {
  synth::SynthParams p;
  p.n_cells = n;
  return p;
}

}  // namespace

TEST_CASE("single niche") {
  synth::SynthParams p = small(500);
  p.n_niches = 1;
  const auto tissue = synth::generate(p);
  for (int v : tissue.true_niche) CHECK(v == 0);
  for (int v : teacher_argmax(tissue.cells)) CHECK(v == 0);
}

TEST_CASE("teacher argmax is the nearest center") {
  const auto tissue = synth::generate(small(5000));
  const std::vector<int> t = teacher_argmax(tissue.cells);
  CHECK(t == tissue.true_niche);
  CHECK(eval::ari(t, tissue.true_niche) >= 0.95);
  CHECK(tissue.cells.planted_niche() == tissue.true_niche);
}

TEST_CASE("composition rows are stochastic") {
  const auto tissue = synth::generate(small(1000));
  for (std::size_t k = 0; k < tissue.n_niches; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < tissue.n_cell_types; ++c) {
      const double v = tissue.composition[k * tissue.n_cell_types + c];
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("more niches than distinct type pairs") {
  synth::SynthParams p = small(2000);
  p.n_niches = 10;
  p.n_cell_types = 3;
  const auto tissue = synth::generate(p);
  for (std::size_t k = 0; k < 10; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += tissue.composition[k * 3 + c];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("empirical compositions converge to the planted rows") {
  synth::SynthParams p = small(5000);
  p.noise_sigma = 0.0;
  const auto tissue = synth::generate(p);
  const eval::CompositionMatrix m = synth::planted_compositions(tissue, tissue.true_niche);
  std::size_t checked = 0;
  for (std::size_t k = 0; k < tissue.n_niches; ++k) {
    const double count = m.weights[k] * static_cast<double>(p.n_cells);
    if (count < 300) continue;
    double tv = 0.0;
    for (std::size_t c = 0; c < tissue.n_cell_types; ++c) {
      tv += 0.5 * std::abs(m.row(k)[c] - tissue.composition[k * tissue.n_cell_types + c]);
    }
    CHECK(tv < 0.05);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("planted_compositions conventions") {
  synth::SynthParams p = small(300);
  p.n_niches = 2;
  const auto tissue = synth::generate(p);
  SUBCASE("single niche with all cells of type 0") {
    synth::PlantedTissue t = tissue;
    std::fill(t.cell_type.begin(), t.cell_type.end(), 0);
    const std::vector<int> labels(t.cell_type.size(), 0);
    const auto m = synth::planted_compositions(t, labels);
    CHECK(m.row(0)[0] == 1.0);
    for (std::size_t c = 1; c < t.n_cell_types; ++c) CHECK(m.row(0)[c] == 0.0);
    CHECK(m.empty[1]);
    for (std::size_t c = 0; c < t.n_cell_types; ++c) {
      CHECK(m.row(1)[c] == doctest::Approx(1.0 / static_cast<double>(t.n_cell_types)));
    }
  }
}

TEST_CASE("byte-identical output for identical seeds") {
  const auto a = synth::generate(small(800));
  const auto b = synth::generate(small(800));
  const std::string pa = testutil::temp_path("synth_a.csv"), pb = testutil::temp_path("synth_b.csv");
  save_table(a.cells, pa);
  save_table(b.cells, pb);
  CHECK(testutil::read_text(pa) == testutil::read_text(pb));
  synth::SynthParams other = small(800);
  other.seed = 8;
  save_table(synth::generate(other).cells, pb);
  CHECK(testutil::read_text(pa) != testutil::read_text(pb));
}

TEST_CASE("teacher logits scale with sharpness") {
  synth::SynthParams p = small(400);
  const auto a = synth::generate(p);
  p.sharpness *= 2.0;
  const auto b = synth::generate(p);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    for (std::size_t k = 0; k < p.n_niches; ++k) {
      CHECK(std::isfinite(a.cells.teacher_logits(i)[k]));
      CHECK(b.cells.teacher_logits(i)[k] == 2.0 * a.cells.teacher_logits(i)[k]);
    }
  }
}

TEST_CASE("density sets the side and pathology follows the niche") {
  const auto tissue = synth::generate(small(2500));
  CHECK(tissue.side_um == doctest::Approx(500.0));
  CHECK(tissue.cells.bounds().max_x <= 500.0);
  const auto& codes = tissue.cells.pathology_codes();
  const auto& vocab = tissue.cells.pathology_vocabulary();
  for (std::size_t i = 0; i < tissue.cells.size(); ++i) {
    CHECK(vocab.name(codes[i]) == "Tumor " + std::to_string(1 + tissue.true_niche[i] % 3));
  }
}

TEST_CASE("invalid parameters") {
  synth::SynthParams p = small(10);
  p.n_niches = 0;
  CHECK_THROWS_AS(synth::generate(p), Error);
  p = small(10);
  p.sharpness = -1.0;
  CHECK_THROWS_AS(synth::generate(p), Error);
}
