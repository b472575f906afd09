// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "histoniche/error.hpp"
#include "histoniche/student.hpp"
#include "text_io.hpp"

namespace histoniche {

namespace {

constexpr const char* kMagic = "histoniche-student v1";

std::string shape_text(const StudentShape& s) {
  return "D=" + std::to_string(s.embedding_dim) + " F=" + std::to_string(s.n_frequencies) +
         " d_model=" + std::to_string(s.d_model) + " d_ff=" + std::to_string(s.d_ff) +
         " K=" + std::to_string(s.n_niches);
}

std::string expect_key(std::istream& in, const std::string& key, const std::string& path) {
  std::string line;
  if (!text::read_line(in, line)) fail(ErrorCode::kParse, path + ": truncated checkpoint before '" + key + "'");
  const std::string prefix = key + " ";
  if (line.rfind(prefix, 0) != 0) {
    fail(ErrorCode::kParse, path + ": expected '" + key + "' line, got '" + line + "'");
  }
  return line.substr(prefix.size());
}

double parse_real(const std::string& s, const std::string& path) {
  const auto v = text::parse_double(s);
  if (!v || !std::isfinite(*v)) fail(ErrorCode::kParse, path + ": bad number '" + s + "'");
  return *v;
}

}  // namespace

void save_checkpoint(const StudentModel& model, const std::string& path) {
  const StudentShape& s = model.params.shape();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  char buf[64];
  out << kMagic << '\n';
  out << "shape " << s.embedding_dim << ' ' << s.n_frequencies << ' ' << s.d_model << ' '
      << s.d_ff << ' ' << s.n_niches << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", model.encoding.base_wavelength_fraction);
  out << "base_wavelength_fraction " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", model.radius_um);
  out << "radius_um " << buf << '\n';
  out << "max_neighbors " << model.max_neighbors << '\n';
  out << "count " << model.params.size() << '\n';
  for (double v : model.params.values()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
  if (!out) fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

StudentModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
  std::string line;
  if (!text::read_line(in, line) || line != kMagic) {
    fail(ErrorCode::kParse, path + ": not a histoniche-student v1 checkpoint");
  }
  StudentShape shape;
  {
    std::istringstream ss(expect_key(in, "shape", path));
    if (!(ss >> shape.embedding_dim >> shape.n_frequencies >> shape.d_model >> shape.d_ff >> shape.n_niches)) {
      fail(ErrorCode::kParse, path + ": malformed shape header");
    }
  }
  StudentModel model;
  model.encoding.n_frequencies = shape.n_frequencies;
  model.encoding.base_wavelength_fraction = parse_real(expect_key(in, "base_wavelength_fraction", path), path);
  model.radius_um = parse_real(expect_key(in, "radius_um", path), path);
  {
    const auto n = text::parse_int(expect_key(in, "max_neighbors", path));
    if (!n || *n < 1) fail(ErrorCode::kParse, path + ": bad max_neighbors");
    model.max_neighbors = static_cast<std::size_t>(*n);
  }
  model.params = StudentParameters(shape);
  const std::string count = expect_key(in, "count", path);
  if (count != std::to_string(model.params.size())) {
    fail(ErrorCode::kParse, path + ": parameter count " + count + " does not match shape (" +
                                std::to_string(model.params.size()) + ")");
  }
  auto values = model.params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!text::read_line(in, line)) fail(ErrorCode::kParse, path + ": truncated parameter block");
    values[i] = parse_real(line, path);
  }
  return model;
}

StudentModel load_checkpoint(const std::string& path, const StudentShape& expected) {
  StudentModel model = load_checkpoint(path);
  if (!(model.params.shape() == expected)) {
    fail(ErrorCode::kShapeMismatch, path + ": checkpoint shape (" + shape_text(model.params.shape()) +
                                        ") differs from expected (" + shape_text(expected) + ")");
  }
  return model;
}

}  // namespace histoniche
