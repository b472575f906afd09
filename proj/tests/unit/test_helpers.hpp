// SPDX-License-Identifier: Apache-2.0
// Small fixtures shared by the unit tests.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "histoniche/core_data.hpp"
#include "histoniche/error.hpp"
#include "histoniche/rng.hpp"

namespace testutil {

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "histoniche_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Uniform random cells on [0, w] x [0, h] with a D-dimensional embedding.
inline histoniche::CellTable random_table(std::size_t n, double w, double h, std::uint64_t seed,
                                          std::size_t dim = 2, std::size_t teacher_dim = 0) {
  histoniche::Rng rng(seed);
  std::vector<histoniche::CellRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.id = "c" + std::to_string(i);
    r.x_um = rng.uniform(0.0, w);
    r.y_um = rng.uniform(0.0, h);
    r.embedding.resize(dim);
    for (double& v : r.embedding) v = rng.normal();
    if (teacher_dim > 0) {
      r.teacher_logits = std::vector<double>(teacher_dim);
      for (double& v : *r.teacher_logits) v = rng.normal();
    }
  }
  return histoniche::CellTable::from_records(std::move(records));
}

template <class F>
histoniche::ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const histoniche::Error& e) {
    return e.code();
  }
  return static_cast<histoniche::ErrorCode>(0);
}

template <class F>
std::string error_message_of(F&& f) {
  try {
    f();
  } catch (const histoniche::Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace testutil
