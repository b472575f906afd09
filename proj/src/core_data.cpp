// SPDX-License-Identifier: Apache-2.0
#include "histoniche/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_set>

#include "histoniche/error.hpp"
#include "text_io.hpp"

namespace histoniche {

namespace {

WarningSink g_warning_sink = nullptr;

std::string describe(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

void require_finite(double v, std::size_t row, const std::string& column) {
  if (!std::isfinite(v)) {
    fail(ErrorCode::kNumeric, describe(row, column) + ": non-finite or missing numeric value");
  }
}

// Collects prefix<k> columns; requires indices to be exactly 0..n-1.
std::vector<std::size_t> indexed_columns(const std::vector<std::string>& header,
                                         const std::string& prefix) {
  std::map<std::size_t, std::size_t> found;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) continue;
    std::size_t k = 0;
    const char* first = name.data() + prefix.size();
    const char* last = name.data() + name.size();
    auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec != std::errc() || ptr != last) continue;
    if (!found.emplace(k, c).second) {
      fail(ErrorCode::kParse, "duplicate column '" + name + "'");
    }
  }
  std::vector<std::size_t> columns;
  for (const auto& [k, c] : found) {
    if (k != columns.size()) {
      fail(ErrorCode::kParse, "column '" + prefix + std::to_string(columns.size()) +
                                  "' missing (indexed columns must be contiguous from 0)");
    }
    columns.push_back(c);
  }
  return columns;
}

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t require_column(const std::vector<std::string>& header, const std::string& name) {
  auto c = find_column(header, name);
  if (!c) fail(ErrorCode::kParse, "missing required column '" + name + "'");
  return *c;
}

}  // namespace

void set_warning_sink(WarningSink sink) { g_warning_sink = sink; }

void warn(const std::string& message) {
  if (g_warning_sink) {
    g_warning_sink(message);
  } else {
    std::cerr << "histoniche: warning: " << message << '\n';
  }
}

int Vocabulary::intern(const std::string& name) {
  auto [it, inserted] = codes_.emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

int Vocabulary::find(const std::string& name) const {
  auto it = codes_.find(name);
  return it == codes_.end() ? kMissingCode : it->second;
}

CellTable CellTable::from_records(std::vector<CellRecord> records,
                                  std::optional<double> resolution_um_per_px) {
  CellTable t;
  t.resolution_um_per_px_ = resolution_um_per_px;
  const std::size_t n = records.size();
  if (n == 0) return t;

  t.embedding_dim_ = records.front().embedding.size();
  if (t.embedding_dim_ == 0) fail(ErrorCode::kInvalidArgument, "embedding dimension must be >= 1");
  std::size_t with_teacher = 0;
  for (const auto& r : records) with_teacher += r.teacher_logits.has_value();
  if (with_teacher != 0 && with_teacher != n) {
    fail(ErrorCode::kInvalidArgument,
         "partial teacher coverage: " + std::to_string(with_teacher) + " of " +
             std::to_string(n) + " rows carry teacher logits");
  }
  if (with_teacher) {
    t.teacher_dim_ = records.front().teacher_logits->size();
    if (*t.teacher_dim_ == 0) fail(ErrorCode::kInvalidArgument, "teacher dimension must be >= 1");
  }

  t.ids_.reserve(n);
  t.xs_.reserve(n);
  t.ys_.reserve(n);
  t.embeddings_.reserve(n * t.embedding_dim_);
  if (t.teacher_dim_) t.teacher_.reserve(n * *t.teacher_dim_);
  t.cell_types_.reserve(n);
  t.pathology_.reserve(n);

  std::unordered_set<std::string> seen;
  seen.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    const std::size_t row = i + 1;
    if (!seen.insert(r.id).second) {
      fail(ErrorCode::kInvalidArgument, describe(row, "id") + ": duplicate id '" + r.id + "'");
    }
    require_finite(r.x_um, row, "x_um");
    require_finite(r.y_um, row, "y_um");
    if (r.embedding.size() != t.embedding_dim_) {
      fail(ErrorCode::kShapeMismatch, describe(row, "embedding") + ": ragged embedding width " +
                                          std::to_string(r.embedding.size()) + " (expected " +
                                          std::to_string(t.embedding_dim_) + ")");
    }
    for (std::size_t d = 0; d < r.embedding.size(); ++d) {
      require_finite(r.embedding[d], row, "emb_" + std::to_string(d));
    }
    if (t.teacher_dim_) {
      if (r.teacher_logits->size() != *t.teacher_dim_) {
        fail(ErrorCode::kShapeMismatch, describe(row, "teacher") + ": ragged teacher width");
      }
      for (std::size_t k = 0; k < r.teacher_logits->size(); ++k) {
        require_finite((*r.teacher_logits)[k], row, "t_" + std::to_string(k));
      }
      t.teacher_.insert(t.teacher_.end(), r.teacher_logits->begin(), r.teacher_logits->end());
    }
    t.ids_.push_back(std::move(r.id));
    t.xs_.push_back(r.x_um);
    t.ys_.push_back(r.y_um);
    t.embeddings_.insert(t.embeddings_.end(), r.embedding.begin(), r.embedding.end());
    if (r.cell_type) {
      t.has_cell_types_ = true;
      t.cell_types_.push_back(r.cell_type->empty() ? kMissingCode
                                                   : t.cell_type_vocab_.intern(*r.cell_type));
    } else {
      t.cell_types_.push_back(kMissingCode);
    }
    if (r.pathology_label) {
      t.has_pathology_ = true;
      t.pathology_.push_back(r.pathology_label->empty()
                                 ? kMissingCode
                                 : t.pathology_vocab_.intern(*r.pathology_label));
    } else {
      t.pathology_.push_back(kMissingCode);
    }
  }

  auto [min_x, max_x] = std::minmax_element(t.xs_.begin(), t.xs_.end());
  auto [min_y, max_y] = std::minmax_element(t.ys_.begin(), t.ys_.end());
  t.bounds_ = {*min_x, *min_y, *max_x, *max_y};
  return t;
}

std::span<const double> CellTable::teacher_logits(std::size_t i) const {
  if (!teacher_dim_) return {};
  return {teacher_.data() + i * *teacher_dim_, *teacher_dim_};
}

void CellTable::set_planted_niche(std::vector<int> labels) {
  if (!labels.empty() && labels.size() != size()) {
    fail(ErrorCode::kShapeMismatch, "planted niche column length does not match table size");
  }
  planted_niche_ = std::move(labels);
}

CellRecord CellTable::record(std::size_t i) const {
  CellRecord r;
  r.id = ids_[i];
  r.x_um = xs_[i];
  r.y_um = ys_[i];
  auto e = embedding(i);
  r.embedding.assign(e.begin(), e.end());
  if (teacher_dim_) {
    auto tl = teacher_logits(i);
    r.teacher_logits = std::vector<double>(tl.begin(), tl.end());
  }
  if (has_cell_types_) {
    r.cell_type = cell_types_[i] == kMissingCode ? std::string() : cell_type_vocab_.name(cell_types_[i]);
  }
  if (has_pathology_) {
    r.pathology_label = pathology_[i] == kMissingCode ? std::string() : pathology_vocab_.name(pathology_[i]);
  }
  return r;
}

CellTable CellTable::subset(std::span<const std::uint8_t> keep) const {
  if (keep.size() != size()) fail(ErrorCode::kShapeMismatch, "subset mask length mismatch");
  std::vector<CellRecord> records;
  std::vector<int> planted;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!keep[i]) continue;
    records.push_back(record(i));
    if (!planted_niche_.empty()) planted.push_back(planted_niche_[i]);
  }
  CellTable t = from_records(std::move(records), resolution_um_per_px_);
  if (!planted.empty()) t.set_planted_niche(std::move(planted));
  return t;
}

CellTable load_table(const std::string& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open table '" + path + "'");

  std::string line;
  if (!text::read_line(in, line)) fail(ErrorCode::kParse, "'" + path + "': empty file");
  const std::vector<std::string> header = text::split_fields(line, schema.delimiter);

  const std::size_t id_col = require_column(header, schema.id_column);
  const std::size_t x_col = require_column(header, schema.x_column);
  const std::size_t y_col = require_column(header, schema.y_column);
  const std::vector<std::size_t> emb_cols = indexed_columns(header, schema.embedding_prefix);
  if (emb_cols.empty()) {
    fail(ErrorCode::kParse, "missing required column '" + schema.embedding_prefix + "0'");
  }
  const std::vector<std::size_t> teacher_cols = indexed_columns(header, schema.teacher_prefix);
  const auto type_col = find_column(header, schema.cell_type_column);
  const auto path_col = find_column(header, schema.pathology_column);
  const auto niche_col = find_column(header, schema.planted_niche_column);
  const double scale = schema.pixel_resolution_um.value_or(1.0);
  if (!(scale > 0.0)) fail(ErrorCode::kInvalidArgument, "pixel resolution must be positive");

  std::vector<CellRecord> records;
  std::vector<int> planted;
  std::size_t row = 0;
  while (text::read_line(in, line)) {
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string> fields = text::split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kParse, "row " + std::to_string(row) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    auto number = [&](std::size_t c) {
      auto v = text::parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorCode::kNumeric, describe(row, header[c]) + ": non-finite or missing numeric value");
      }
      return *v;
    };

    CellRecord r;
    r.id = fields[id_col];
    if (r.id.empty()) fail(ErrorCode::kParse, describe(row, header[id_col]) + ": empty id");
    r.x_um = number(x_col) * scale;
    r.y_um = number(y_col) * scale;
    r.embedding.reserve(emb_cols.size());
    for (std::size_t c : emb_cols) r.embedding.push_back(number(c));

    if (!teacher_cols.empty()) {
      std::size_t filled = 0;
      for (std::size_t c : teacher_cols) filled += !fields[c].empty();
      if (filled == teacher_cols.size()) {
        std::vector<double> logits;
        logits.reserve(teacher_cols.size());
        for (std::size_t c : teacher_cols) {
          double v = number(c);
          if (schema.teacher_as_probabilities) {
            if (v < 0.0) fail(ErrorCode::kNumeric, describe(row, header[c]) + ": negative probability");
            v = std::log(std::max(v, kProbabilityFloor));
          }
          logits.push_back(v);
        }
        r.teacher_logits = std::move(logits);
      } else if (filled != 0) {
        auto empty = std::find_if(teacher_cols.begin(), teacher_cols.end(),
                                  [&](std::size_t c) { return fields[c].empty(); });
        fail(ErrorCode::kNumeric, describe(row, header[*empty]) +
                                      ": non-finite or missing numeric value (partial teacher row)");
      }
    }
    if (type_col) r.cell_type = fields[*type_col];
    if (path_col) r.pathology_label = fields[*path_col];
    if (niche_col) {
      auto v = text::parse_int(fields[*niche_col]);
      if (!v) fail(ErrorCode::kParse, describe(row, header[*niche_col]) + ": expected integer");
      planted.push_back(*v);
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) fail(ErrorCode::kParse, "'" + path + "': no data rows");

  CellTable table = CellTable::from_records(std::move(records), schema.pixel_resolution_um);
  if (niche_col) table.set_planted_niche(std::move(planted));
  return table;
}

void save_table(const CellTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write table '" + path + "'");

  out << "id,x_um,y_um";
  for (std::size_t d = 0; d < table.embedding_dim(); ++d) out << ",emb_" << d;
  const std::size_t k = table.teacher_dim().value_or(0);
  for (std::size_t j = 0; j < k; ++j) out << ",t_" << j;
  if (table.has_cell_types()) out << ",cell_type";
  if (table.has_pathology()) out << ",pathology";
  const bool planted = !table.planted_niche().empty();
  if (planted) out << ",true_niche";
  out << '\n';

  std::string buf;
  for (std::size_t i = 0; i < table.size(); ++i) {
    buf.clear();
    buf += text::quote_field(table.id(i), ',');
    text::append_number(buf, table.x(i));
    text::append_number(buf, table.y(i));
    for (double v : table.embedding(i)) text::append_number(buf, v);
    for (double v : table.teacher_logits(i)) text::append_number(buf, v);
    if (table.has_cell_types()) {
      const int c = table.cell_type_codes()[i];
      buf += ',';
      if (c != kMissingCode) buf += text::quote_field(table.cell_type_vocabulary().name(c), ',');
    }
    if (table.has_pathology()) {
      const int c = table.pathology_codes()[i];
      buf += ',';
      if (c != kMissingCode) buf += text::quote_field(table.pathology_vocabulary().name(c), ',');
    }
    if (planted) {
      buf += ',';
      buf += std::to_string(table.planted_niche()[i]);
    }
    buf += '\n';
    out << buf;
  }
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

void save_assignments(const CellTable& table, std::span<const int> labels, int n_niches,
                      const std::string& path, const AssignmentExtras& extras) {
  const std::size_t n = table.size();
  if (labels.size() != n) {
    fail(ErrorCode::kShapeMismatch, "label count " + std::to_string(labels.size()) +
                                        " does not match cell count " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    // -1 marks cells without a prediction (discarded by the split).
    if (labels[i] < -1 || labels[i] >= n_niches) {
      fail(ErrorCode::kInvalidArgument, "label " + std::to_string(labels[i]) + " at row " +
                                            std::to_string(i + 1) + " outside [0, " +
                                            std::to_string(n_niches) + ")");
    }
  }
  if (!extras.split.empty() && extras.split.size() != n) {
    fail(ErrorCode::kShapeMismatch, "split column length mismatch");
  }
  if (!extras.logits.empty() && extras.logits.size() != n * extras.n_logits) {
    fail(ErrorCode::kShapeMismatch, "logit matrix size mismatch");
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write assignments '" + path + "'");
  out << "id,niche";
  if (!extras.split.empty()) out << ",split";
  if (!extras.logits.empty()) {
    for (std::size_t k = 0; k < extras.n_logits; ++k) out << ",logit_" << k;
  }
  out << '\n';
  std::string buf;
  for (std::size_t i = 0; i < n; ++i) {
    buf = text::quote_field(table.id(i), ',');
    buf += ',';
    buf += std::to_string(labels[i]);
    if (!extras.split.empty()) {
      buf += ',';
      buf += extras.split[i];
    }
    if (!extras.logits.empty()) {
      for (std::size_t k = 0; k < extras.n_logits; ++k) {
        const double v = extras.logits[i * extras.n_logits + k];
        if (std::isfinite(v)) {
          text::append_number(buf, v);
        } else {
          buf += ',';  // no prediction for this cell
        }
      }
    }
    buf += '\n';
    out << buf;
  }
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

Assignments load_assignments(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open assignments '" + path + "'");
  std::string line;
  if (!text::read_line(in, line)) fail(ErrorCode::kParse, "'" + path + "': empty file");
  const auto header = text::split_fields(line, ',');
  const std::size_t id_col = require_column(header, "id");
  const std::size_t niche_col = require_column(header, "niche");
  const auto split_col = find_column(header, "split");
  const auto logit_cols = indexed_columns(header, "logit_");

  Assignments a;
  a.n_logits = logit_cols.size();
  std::size_t row = 0;
  while (text::read_line(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = text::split_fields(line, ',');
    if (fields.size() != header.size()) {
      fail(ErrorCode::kParse, "row " + std::to_string(row) + ": field count mismatch");
    }
    a.ids.push_back(fields[id_col]);
    auto label = text::parse_int(fields[niche_col]);
    if (!label) fail(ErrorCode::kParse, describe(row, "niche") + ": expected integer");
    a.niche.push_back(*label);
    if (split_col) a.split.push_back(fields[*split_col]);
    for (std::size_t c : logit_cols) {
      if (fields[c].empty()) {
        a.logits.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      auto v = text::parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorCode::kNumeric, describe(row, header[c]) + ": non-finite or missing numeric value");
      }
      a.logits.push_back(*v);
    }
  }
  return a;
}

std::vector<int> labels_for_table(const CellTable& table, const Assignments& assignments) {
  std::unordered_map<std::string, std::size_t> where;
  where.reserve(assignments.ids.size());
  for (std::size_t i = 0; i < assignments.ids.size(); ++i) where.emplace(assignments.ids[i], i);
  std::vector<int> labels(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto it = where.find(table.id(i));
    if (it == where.end()) {
      fail(ErrorCode::kInvalidArgument, "cell '" + table.id(i) + "' has no assignment");
    }
    labels[i] = assignments.niche[it->second];
  }
  return labels;
}

}  // namespace histoniche
