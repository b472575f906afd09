// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "histoniche/student.hpp"
#include "test_helpers.hpp"

using namespace histoniche;

namespace {

StudentModel sample_model() {
  StudentShape s;
  s.embedding_dim = 5;
  s.n_frequencies = 3;
  s.d_model = 8;
  s.d_ff = 12;
  s.n_niches = 4;
  StudentModel m;
  m.params = StudentParameters::initialize(s, 3);
  m.params.values()[0] = 1.0 / 3.0;  // needs all 17 digits to round-trip
  m.encoding.n_frequencies = 3;
  m.encoding.base_wavelength_fraction = 0.75;
  m.radius_um = 25.198117;
  m.max_neighbors = 48;
  return m;
}

}  // namespace

TEST_CASE("checkpoint round-trip is exact") {
  const StudentModel m = sample_model();
  const std::string path = testutil::temp_path("model.ckpt");
  save_checkpoint(m, path);
  const StudentModel back = load_checkpoint(path);
  CHECK(back.params.shape() == m.params.shape());
  CHECK(back.radius_um == m.radius_um);
  CHECK(back.max_neighbors == 48);
  CHECK(back.encoding.base_wavelength_fraction == 0.75);
  CHECK(back.encoding.n_frequencies == 3);
  CHECK(std::equal(back.params.values().begin(), back.params.values().end(),
                   m.params.values().begin()));

  const std::string again = testutil::temp_path("model_again.ckpt");
  save_checkpoint(back, again);
  CHECK(testutil::read_text(path) == testutil::read_text(again));
}

TEST_CASE("shape check on load") {
  const StudentModel m = sample_model();
  const std::string path = testutil::temp_path("model_shape.ckpt");
  save_checkpoint(m, path);
  CHECK_NOTHROW(load_checkpoint(path, m.params.shape()));
  StudentShape other = m.params.shape();
  other.n_niches = 5;
  CHECK(testutil::error_code_of([&] { load_checkpoint(path, other); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("malformed checkpoints") {
  const std::string path = testutil::temp_path("bad.ckpt");
  SUBCASE("missing file") {
    CHECK(testutil::error_code_of([&] { load_checkpoint(testutil::temp_path("absent.ckpt")); }) ==
          ErrorCode::kIo);
  }
  SUBCASE("wrong magic") {
    testutil::write_text(path, "not a checkpoint\n");
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
  SUBCASE("truncated values") {
    const StudentModel m = sample_model();
    save_checkpoint(m, path);
    std::string text = testutil::read_text(path);
    text.resize(text.size() / 2);
    text.resize(text.rfind('\n') + 1);
    testutil::write_text(path, text);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
}
