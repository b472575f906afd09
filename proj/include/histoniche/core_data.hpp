// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace histoniche {

// One cell as it enters the library. CellTable stores columns, not records.
struct CellRecord {
  std::string id;
  double x_um = 0.0;
  double y_um = 0.0;
  std::vector<double> embedding;
  std::optional<std::vector<double>> teacher_logits;
  std::optional<std::string> cell_type;
  std::optional<std::string> pathology_label;
};

// String <-> dense code interning, codes in order of first appearance.
class Vocabulary {
 public:
  int intern(const std::string& name);
  int find(const std::string& name) const;  // -1 when absent
  const std::string& name(int code) const { return names_.at(static_cast<std::size_t>(code)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> codes_;
};

struct Bounds {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

// Per-cell boolean mask (1 = allowed). std::vector<bool> is avoided so masks
// can be viewed as spans and handed across the C boundary.
using CellMask = std::vector<std::uint8_t>;

inline constexpr int kMissingCode = -1;

// Validated, immutable-after-construction cell table in column layout.
class CellTable {
 public:
  CellTable() = default;

  // Validates every record invariant; throws Error naming the offending row.
  static CellTable from_records(std::vector<CellRecord> records,
                                std::optional<double> resolution_um_per_px = std::nullopt);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t embedding_dim() const { return embedding_dim_; }
  std::optional<std::size_t> teacher_dim() const { return teacher_dim_; }
  const Bounds& bounds() const { return bounds_; }
  std::optional<double> resolution_um_per_px() const { return resolution_um_per_px_; }

  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::string>& ids() const { return ids_; }
  double x(std::size_t i) const { return xs_[i]; }
  double y(std::size_t i) const { return ys_[i]; }
  std::span<const double> xs() const { return xs_; }
  std::span<const double> ys() const { return ys_; }

  std::span<const double> embedding(std::size_t i) const {
    return {embeddings_.data() + i * embedding_dim_, embedding_dim_};
  }
  std::span<const double> embeddings() const { return embeddings_; }

  bool has_teacher() const { return teacher_dim_.has_value(); }
  std::span<const double> teacher_logits(std::size_t i) const;

  // Dense codes, kMissingCode where the label is absent.
  const std::vector<int>& cell_type_codes() const { return cell_types_; }
  const std::vector<int>& pathology_codes() const { return pathology_; }
  const Vocabulary& cell_type_vocabulary() const { return cell_type_vocab_; }
  const Vocabulary& pathology_vocabulary() const { return pathology_vocab_; }
  bool has_cell_types() const { return has_cell_types_; }
  bool has_pathology() const { return has_pathology_; }

  // Optional ground-truth niche column written by the synthetic generator.
  const std::vector<int>& planted_niche() const { return planted_niche_; }
  void set_planted_niche(std::vector<int> labels);

  CellRecord record(std::size_t i) const;

  // Sub-table with the rows where keep[i] != 0, in original order.
  CellTable subset(std::span<const std::uint8_t> keep) const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<double> embeddings_;
  std::vector<double> teacher_;
  std::vector<int> cell_types_;
  std::vector<int> pathology_;
  std::vector<int> planted_niche_;
  Vocabulary cell_type_vocab_;
  Vocabulary pathology_vocab_;
  bool has_cell_types_ = false;
  bool has_pathology_ = false;
  std::size_t embedding_dim_ = 0;
  std::optional<std::size_t> teacher_dim_;
  std::optional<double> resolution_um_per_px_;
  Bounds bounds_;
};

// Column-name configuration for load_table.
struct TableSchema {
  char delimiter = ',';
  std::string id_column = "id";
  std::string x_column = "x_um";
  std::string y_column = "y_um";
  std::string embedding_prefix = "emb_";
  std::string teacher_prefix = "t_";
  std::string cell_type_column = "cell_type";
  std::string pathology_column = "pathology";
  std::string planted_niche_column = "true_niche";
  // When set, coordinate columns are in pixels and are converted to µm.
  std::optional<double> pixel_resolution_um;
  // Teacher columns hold probabilities; they are log-transformed on load
  // (floored at kProbabilityFloor).
  bool teacher_as_probabilities = false;
};

inline constexpr double kProbabilityFloor = 1e-12;

CellTable load_table(const std::string& path, const TableSchema& schema = {});
void save_table(const CellTable& table, const std::string& path);

// Assignment files: id,niche[,split][,logit_0..logit_{K-1}]. Cells without a
// prediction carry niche -1 and empty logit fields (read back as NaN).
struct Assignments {
  std::vector<std::string> ids;
  std::vector<int> niche;
  std::vector<std::string> split;     // empty when the column is absent
  std::vector<double> logits;         // row-major n x n_logits, may be empty
  std::size_t n_logits = 0;
};

struct AssignmentExtras {
  std::span<const std::string> split;   // per-cell tag names, optional
  std::span<const double> logits;       // n x n_logits, optional
  std::size_t n_logits = 0;
};

void save_assignments(const CellTable& table, std::span<const int> labels, int n_niches,
                      const std::string& path, const AssignmentExtras& extras = {});
Assignments load_assignments(const std::string& path);

// Reorders assignment labels to table row order; throws if an id is missing.
std::vector<int> labels_for_table(const CellTable& table, const Assignments& assignments);

}  // namespace histoniche
