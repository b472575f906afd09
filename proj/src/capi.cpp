// SPDX-License-Identifier: Apache-2.0
#include "histoniche/histoniche.h"

#include <cmath>
#include <exception>
#include <limits>
#include <new>
#include <string>
#include <unordered_map>

#include "histoniche/core_data.hpp"
#include "histoniche/distill.hpp"
#include "histoniche/error.hpp"
#include "histoniche/eval.hpp"
#include "histoniche/render.hpp"
#include "histoniche/spatial_index.hpp"
#include "histoniche/splitter.hpp"
#include "histoniche/student.hpp"
#include "histoniche/synth.hpp"

using namespace histoniche;

struct hn_table {
  CellTable table;
};
struct hn_index {
  NeighborhoodIndex index;
};
struct hn_split {
  SplitAssignment split;
};
struct hn_model {
  StudentModel model;
};

namespace {

thread_local std::string g_last_error;
hn_warning_fn g_warning_fn = nullptr;

hn_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return HN_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return HN_ERR_IO;
    case ErrorCode::kParse: return HN_ERR_PARSE;
    case ErrorCode::kNumeric: return HN_ERR_NUMERIC;
    case ErrorCode::kState: return HN_ERR_STATE;
    case ErrorCode::kShapeMismatch: return HN_ERR_SHAPE_MISMATCH;
  }
  return HN_ERR_INTERNAL;
}

// Runs fn, translating exceptions into a status plus the thread's last error.
template <class Fn>
hn_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HN_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return HN_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

std::span<const std::uint8_t> mask_view(const std::uint8_t* mask, std::size_t n) {
  return mask ? std::span<const std::uint8_t>(mask, n) : std::span<const std::uint8_t>{};
}

// Masks are required by the training and inference calls.
std::span<const std::uint8_t> required_mask(const std::uint8_t* mask, std::size_t n, const char* what) {
  require(mask, what);
  return {mask, n};
}

void forward_warning(const std::string& message) {
  if (g_warning_fn) g_warning_fn(message.c_str());
}

}  // namespace

extern "C" {

const char* hn_version(void) { return HISTONICHE_VERSION; }

const char* hn_last_error(void) { return g_last_error.c_str(); }

const char* hn_status_name(hn_status status) {
  switch (status) {
    case HN_OK: return "ok";
    case HN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HN_ERR_IO: return "i/o error";
    case HN_ERR_PARSE: return "parse error";
    case HN_ERR_NUMERIC: return "numeric error";
    case HN_ERR_STATE: return "invalid state";
    case HN_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case HN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void hn_set_warning_callback(hn_warning_fn fn) {
  g_warning_fn = fn;
  set_warning_sink(fn ? forward_warning : nullptr);
}

// ---- tables ---------------------------------------------------------------

hn_status hn_table_load(const char* path, const hn_table_schema* schema, hn_table** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    TableSchema s;
    if (schema) {
      if (schema->delimiter) s.delimiter = schema->delimiter;
      if (schema->pixel_resolution_um > 0.0) s.pixel_resolution_um = schema->pixel_resolution_um;
      s.teacher_as_probabilities = schema->teacher_as_probabilities != 0;
    }
    *out = new hn_table{load_table(path, s)};
  });
}

hn_status hn_table_save(const hn_table* table, const char* path) {
  return guarded([&] {
    require(table, "table");
    require(path, "path");
    save_table(table->table, path);
  });
}

void hn_table_free(hn_table* table) { delete table; }

size_t hn_table_size(const hn_table* table) { return table ? table->table.size() : 0; }

size_t hn_table_embedding_dim(const hn_table* table) { return table ? table->table.embedding_dim() : 0; }

size_t hn_table_teacher_dim(const hn_table* table) {
  return table ? table->table.teacher_dim().value_or(0) : 0;
}

size_t hn_table_n_cell_types(const hn_table* table) {
  return table ? table->table.cell_type_vocabulary().size() : 0;
}

size_t hn_table_n_pathology(const hn_table* table) {
  return table ? table->table.pathology_vocabulary().size() : 0;
}

const char* hn_table_cell_type_name(const hn_table* table, size_t code) {
  if (!table || code >= table->table.cell_type_vocabulary().size()) return nullptr;
  return table->table.cell_type_vocabulary().name(static_cast<int>(code)).c_str();
}

hn_status hn_table_cell_types(const hn_table* table, int* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    const auto& c = table->table.cell_type_codes();
    if (c.empty()) {
      std::fill_n(out, table->table.size(), kMissingCode);
    } else {
      std::copy(c.begin(), c.end(), out);
    }
  });
}

hn_status hn_table_pathology(const hn_table* table, int* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    const auto& c = table->table.pathology_codes();
    if (c.empty()) {
      std::fill_n(out, table->table.size(), kMissingCode);
    } else {
      std::copy(c.begin(), c.end(), out);
    }
  });
}

hn_status hn_table_planted_niche(const hn_table* table, int* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    const auto& p = table->table.planted_niche();
    if (p.empty()) fail(ErrorCode::kState, "table has no planted-niche column");
    std::copy(p.begin(), p.end(), out);
  });
}

hn_status hn_table_teacher_labels(const hn_table* table, int* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    const CellTable& t = table->table;
    if (!t.has_teacher()) fail(ErrorCode::kState, "table has no teacher logits");
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = argmax(t.teacher_logits(i));
  });
}

hn_status hn_table_coords(const hn_table* table, double* xs, double* ys) {
  return guarded([&] {
    require(table, "table");
    if (xs) std::copy(table->table.xs().begin(), table->table.xs().end(), xs);
    if (ys) std::copy(table->table.ys().begin(), table->table.ys().end(), ys);
  });
}

// ---- synthetic tissue -----------------------------------------------------

void hn_synth_default_params(hn_synth_params* params) {
  if (!params) return;
  const synth::SynthParams d;
  params->n_cells = d.n_cells;
  params->n_niches = d.n_niches;
  params->n_cell_types = d.n_cell_types;
  params->embedding_dim = d.embedding_dim;
  params->sharpness = d.sharpness;
  params->noise_sigma = d.noise_sigma;
  params->seed = d.seed;
  params->density_per_um2 = d.density_per_um2;
  params->plant_pathology = d.plant_pathology ? 1 : 0;
}

hn_status hn_synth_generate(const hn_synth_params* params, hn_table** out) {
  return guarded([&] {
    require(params, "params");
    require(out, "out");
    synth::SynthParams p;
    p.n_cells = params->n_cells;
    p.n_niches = params->n_niches;
    p.n_cell_types = params->n_cell_types;
    p.embedding_dim = params->embedding_dim;
    p.sharpness = params->sharpness;
    p.noise_sigma = params->noise_sigma;
    p.seed = params->seed;
    p.density_per_um2 = params->density_per_um2;
    p.plant_pathology = params->plant_pathology != 0;
    *out = new hn_table{synth::generate(p).cells};
  });
}

// ---- neighborhoods --------------------------------------------------------

hn_status hn_index_build(const hn_table* table, size_t max_neighbors, hn_index** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    *out = new hn_index{NeighborhoodIndex::build(table->table, max_neighbors)};
  });
}

void hn_index_free(hn_index* index) { delete index; }

hn_status hn_index_calibrate(hn_index* index, size_t target_count, size_t n_samples, uint64_t seed,
                             const uint8_t* mask, hn_calibration* out) {
  return guarded([&] {
    require(index, "index");
    const RadiusCalibration c = calibrate_radius(index->index, target_count, n_samples, seed,
                                                 mask_view(mask, index->index.size()));
    index->index.set_radius(c.radius_um);
    if (out) {
      out->radius_um = c.radius_um;
      out->mean_count = c.mean_count;
      out->within_tolerance = c.within_tolerance ? 1 : 0;
      out->iterations = c.iterations;
    }
  });
}

hn_status hn_index_set_radius(hn_index* index, double radius_um) {
  return guarded([&] {
    require(index, "index");
    index->index.set_radius(radius_um);
  });
}

double hn_index_radius(const hn_index* index) { return index ? index->index.radius_um() : 0.0; }

double hn_index_bbox_diagonal(const hn_index* index) { return index ? index->index.bbox_diagonal() : 0.0; }

// ---- spatial split --------------------------------------------------------

void hn_split_default_options(hn_split_options* options) {
  if (!options) return;
  const SplitOptions d;
  options->crop_size_px = d.crop_size_px;
  options->resolution_um_per_px = d.resolution_um_per_px;
  options->test_strip = d.test_strip;
  options->axis = HN_AXIS_Y;
}

hn_status hn_split_make(const hn_table* table, const hn_split_options* options, hn_split** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    SplitOptions o;
    if (options) {
      o.crop_size_px = options->crop_size_px;
      o.resolution_um_per_px = options->resolution_um_per_px;
      o.test_strip = options->test_strip;
      if (options->axis != HN_AXIS_Y && options->axis != HN_AXIS_X) {
        fail(ErrorCode::kInvalidArgument, "axis must be HN_AXIS_Y or HN_AXIS_X");
      }
      o.axis = options->axis == HN_AXIS_X ? StripAxis::kX : StripAxis::kY;
    }
    *out = new hn_split{make_split(table->table, o)};
  });
}

void hn_split_free(hn_split* split) { delete split; }

double hn_split_buffer_um(const hn_split* split) { return split ? split->split.buffer_um : 0.0; }

void hn_split_boundaries(const hn_split* split, double out[3]) {
  if (!split || !out) return;
  for (std::size_t i = 0; i < 3; ++i) out[i] = split->split.strip_boundaries_um[i];
}

size_t hn_split_count(const hn_split* split, int tag) {
  if (!split || tag < 0 || tag > 2) return 0;
  return split->split.count(static_cast<SplitTag>(tag));
}

hn_status hn_split_tags(const hn_split* split, uint8_t* out) {
  return guarded([&] {
    require(split, "split");
    require(out, "out");
    for (std::size_t i = 0; i < split->split.tags.size(); ++i) out[i] = static_cast<uint8_t>(split->split.tags[i]);
  });
}

hn_status hn_split_masks(const hn_split* split, uint8_t* train, uint8_t* test) {
  return guarded([&] {
    require(split, "split");
    const SplitMasks m = split_masks(split->split);
    if (train) std::copy(m.train.begin(), m.train.end(), train);
    if (test) std::copy(m.test.begin(), m.test.end(), test);
  });
}

const char* hn_split_tag_name(int tag) {
  if (tag < 0 || tag > 2) return nullptr;
  return split_tag_name(static_cast<SplitTag>(tag));
}

// ---- student model --------------------------------------------------------

hn_status hn_model_create(const hn_model_shape* shape, double base_wavelength_fraction, uint64_t seed,
                          hn_model** out) {
  return guarded([&] {
    require(shape, "shape");
    require(out, "out");
    if (!(base_wavelength_fraction > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "base_wavelength_fraction must be > 0");
    }
    StudentShape s{shape->embedding_dim, shape->n_frequencies, shape->d_model, shape->d_ff,
                   shape->n_niches};
    auto* m = new hn_model{};
    m->model.params = StudentParameters::initialize(s, seed);
    m->model.encoding.n_frequencies = s.n_frequencies;
    m->model.encoding.base_wavelength_fraction = base_wavelength_fraction;
    *out = m;
  });
}

hn_status hn_model_load(const char* path, hn_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new hn_model{load_checkpoint(path)};
  });
}

hn_status hn_model_save(const hn_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(model->model, path);
  });
}

void hn_model_free(hn_model* model) { delete model; }

void hn_model_get_shape(const hn_model* model, hn_model_shape* out) {
  if (!model || !out) return;
  const StudentShape& s = model->model.params.shape();
  *out = hn_model_shape{s.embedding_dim, s.n_frequencies, s.d_model, s.d_ff, s.n_niches};
}

size_t hn_model_parameter_count(const hn_model* model) { return model ? model->model.params.size() : 0; }

double hn_model_radius(const hn_model* model) { return model ? model->model.radius_um : 0.0; }

size_t hn_model_max_neighbors(const hn_model* model) { return model ? model->model.max_neighbors : 0; }

const char* hn_model_activation(void) { return kActivationName; }

// ---- distillation ---------------------------------------------------------

void hn_distill_default_config(hn_distill_config* config) {
  if (!config) return;
  const DistillConfig d;
  *config = hn_distill_config{d.temperature, d.epochs,        d.batch_size,     d.learning_rate,
                              d.adam_beta1,  d.adam_beta2,    d.adam_eps,       d.grad_clip_norm,
                              d.seed,        d.n_niches,      d.n_threads};
}

hn_status hn_train(const hn_table* table, const hn_index* index, const uint8_t* train_mask,
                   const uint8_t* test_mask, hn_model* model, const hn_distill_config* config,
                   hn_train_report* report, double* epoch_loss, size_t cap) {
  return guarded([&] {
    require(table, "table");
    require(index, "index");
    require(model, "model");
    require(config, "config");
    const std::size_t n = table->table.size();
    DistillConfig c;
    c.temperature = config->temperature;
    c.epochs = config->epochs;
    c.batch_size = config->batch_size;
    c.learning_rate = config->learning_rate;
    c.adam_beta1 = config->adam_beta1;
    c.adam_beta2 = config->adam_beta2;
    c.adam_eps = config->adam_eps;
    c.grad_clip_norm = config->grad_clip_norm;
    c.seed = config->seed;
    c.n_niches = config->n_niches;
    c.n_threads = config->n_threads;
    const TrainReport r = train(table->table, index->index, required_mask(train_mask, n, "train_mask"),
                                mask_view(test_mask, n), model->model, c);
    if (report) {
      *report = hn_train_report{r.initial_loss, r.final_train_loss, r.final_test_loss, r.wall_seconds,
                                r.n_train,      r.n_test,           r.steps,           r.epoch_loss.size()};
    }
    if (epoch_loss) {
      for (std::size_t e = 0; e < std::min(cap, r.epoch_loss.size()); ++e) epoch_loss[e] = r.epoch_loss[e];
    }
  });
}

hn_status hn_infer(const hn_table* table, const hn_index* index, const uint8_t* mask,
                   const hn_model* model, size_t n_threads, int* labels, double* logits) {
  return guarded([&] {
    require(table, "table");
    require(index, "index");
    require(model, "model");
    require(labels, "labels");
    const std::size_t n = table->table.size();
    const Inference inf = infer(table->table, index->index, required_mask(mask, n, "mask"), model->model, n_threads);
    std::copy(inf.labels.begin(), inf.labels.end(), labels);
    if (logits) std::copy(inf.logits.begin(), inf.logits.end(), logits);
  });
}

// ---- assignment files -----------------------------------------------------

hn_status hn_assignments_save(const hn_table* table, const int* labels, int n_niches,
                              const uint8_t* split_tags, const double* logits, size_t n_logits,
                              const char* path) {
  return guarded([&] {
    require(table, "table");
    require(labels, "labels");
    require(path, "path");
    const std::size_t n = table->table.size();
    std::vector<std::string> names;
    if (split_tags) {
      names.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (split_tags[i] > 2) fail(ErrorCode::kInvalidArgument, "split tag out of range");
        names.emplace_back(split_tag_name(static_cast<SplitTag>(split_tags[i])));
      }
    }
    AssignmentExtras extras;
    extras.split = names;
    if (logits) {
      extras.logits = std::span<const double>(logits, n * n_logits);
      extras.n_logits = n_logits;
    }
    save_assignments(table->table, std::span<const int>(labels, n), n_niches, path, extras);
  });
}

hn_status hn_assignments_load(const hn_table* table, const char* path, int* labels,
                              uint8_t* split_tags, int* has_split) {
  return guarded([&] {
    require(table, "table");
    require(path, "path");
    require(labels, "labels");
    const Assignments a = load_assignments(path);
    const std::vector<int> l = labels_for_table(table->table, a);
    std::copy(l.begin(), l.end(), labels);
    if (has_split) *has_split = a.split.empty() ? 0 : 1;
    if (split_tags && !a.split.empty()) {
      std::unordered_map<std::string, std::size_t> where;
      for (std::size_t i = 0; i < a.ids.size(); ++i) where.emplace(a.ids[i], i);
      for (std::size_t i = 0; i < table->table.size(); ++i) {
        split_tags[i] = static_cast<uint8_t>(parse_split_tag(a.split[where.at(table->table.id(i))]));
      }
    }
  });
}

// ---- evaluation -----------------------------------------------------------

hn_status hn_ari(const int* a, const int* b, size_t n, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = eval::ari({a, n}, {b, n});
  });
}

hn_status hn_nmi(const int* a, const int* b, size_t n, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = eval::nmi({a, n}, {b, n});
  });
}

hn_status hn_jsd(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    require(p, "p");
    require(q, "q");
    require(out, "out");
    *out = eval::jsd({p, n}, {q, n});
  });
}

hn_status hn_align(const int* teacher_labels, const int* method_labels, const int* cell_types, size_t n,
                   size_t k_teacher, size_t k_method, size_t n_types, int cost_mode, size_t n_draws,
                   uint64_t seed, hn_alignment* out, int* matching, double* pair_jsd) {
  return guarded([&] {
    require(teacher_labels, "teacher_labels");
    require(method_labels, "method_labels");
    require(cell_types, "cell_types");
    require(out, "out");
    if (cost_mode != HN_COST_TEACHER_WEIGHTED && cost_mode != HN_COST_UNWEIGHTED) {
      fail(ErrorCode::kInvalidArgument, "unknown cost mode");
    }
    // Both compositions are taken over the cells that both labelings cover.
    std::vector<int> t(teacher_labels, teacher_labels + n), m(method_labels, method_labels + n);
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] < 0 || m[i] < 0) t[i] = m[i] = -1;
    }
    const std::span<const int> types(cell_types, n);
    const auto ct = eval::composition(t, types, k_teacher, n_types);
    const auto cm = eval::composition(m, types, k_method, n_types);
    const auto mode = cost_mode == HN_COST_UNWEIGHTED ? eval::AlignmentCost::kUnweighted
                                                      : eval::AlignmentCost::kTeacherWeighted;
    const eval::NicheAlignment a = eval::align_niches(ct, cm, mode);
    out->weighted_mean_jsd = a.weighted_mean_jsd;
    out->permutation_fraction =
        n_draws > 0 ? eval::permutation_test(ct, cm, a, n_draws, seed) : std::numeric_limits<double>::quiet_NaN();
    out->n_excluded_pairs = a.excluded_pairs.size();
    if (matching) std::copy(a.matching.begin(), a.matching.end(), matching);
    if (pair_jsd) std::copy(a.pair_jsd.begin(), a.pair_jsd.end(), pair_jsd);
  });
}

void hn_kmeans_default_options(hn_kmeans_options* options) {
  if (!options) return;
  const eval::KMeansOptions d;
  *options = hn_kmeans_options{d.n_init, d.max_iter, d.seed};
}

hn_status hn_kmeans_baseline(const hn_table* table, const uint8_t* fit_mask, size_t k,
                             const hn_kmeans_options* options, int* labels) {
  return guarded([&] {
    require(table, "table");
    require(labels, "labels");
    eval::KMeansOptions o;
    if (options) {
      o.n_init = options->n_init;
      o.max_iter = options->max_iter;
      o.seed = options->seed;
    }
    const std::size_t n = table->table.size();
    CellMask all;
    std::span<const std::uint8_t> fit;
    if (fit_mask) {
      fit = {fit_mask, n};
    } else {
      all.assign(n, 1);
      fit = all;
    }
    const std::vector<int> l = eval::kmeans_baseline(table->table, fit, k, o);
    std::copy(l.begin(), l.end(), labels);
  });
}

void hn_probe_default_options(hn_probe_options* options) {
  if (!options) return;
  const eval::ProbeOptions d;
  *options = hn_probe_options{d.c_reg, d.epochs, d.seed};
}

hn_status hn_svm_probe(const int* niche_labels, size_t n_niches, const int* pathology, int n_classes,
                       const uint8_t* train_mask, const uint8_t* test_mask, size_t n,
                       const hn_probe_options* options, hn_probe_result* out, double* per_class_f1) {
  return guarded([&] {
    require(niche_labels, "niche_labels");
    require(pathology, "pathology");
    require(train_mask, "train_mask");
    require(test_mask, "test_mask");
    require(out, "out");
    eval::ProbeOptions o;
    if (options) {
      o.c_reg = options->c_reg;
      o.epochs = options->epochs;
      o.seed = options->seed;
    }
    const eval::ProbeResult r = eval::svm_probe({niche_labels, n}, n_niches, {pathology, n}, n_classes,
                                                {train_mask, n}, {test_mask, n}, o);
    out->macro_f1 = r.f1.macro_f1;
    out->n_train = r.n_train;
    out->n_test = r.n_test;
    if (per_class_f1) std::copy(r.f1.per_class.begin(), r.f1.per_class.end(), per_class_f1);
  });
}

// ---- rendering ------------------------------------------------------------

void hn_render_default_options(hn_render_options* options) {
  if (!options) return;
  const RenderOptions d;
  *options = hn_render_options{HN_RENDER_SVG, d.width_px, d.dot_radius_px, d.legend ? 1 : 0, nullptr};
}

hn_status hn_render_map(const hn_table* table, const int* labels, size_t n_niches, const hn_split* split,
                        const hn_render_options* options, const char* path) {
  return guarded([&] {
    require(table, "table");
    require(labels, "labels");
    require(path, "path");
    RenderOptions o;
    int format = HN_RENDER_SVG;
    if (options) {
      o.width_px = options->width_px;
      o.dot_radius_px = options->dot_radius_px;
      o.legend = options->legend != 0;
      if (options->title) o.title = options->title;
      format = options->format;
    }
    const std::span<const int> l(labels, table->table.size());
    const SplitAssignment* s = split ? &split->split : nullptr;
    if (format == HN_RENDER_PPM) {
      write_file(path, niche_map_ppm(table->table, l, n_niches, s, o));
    } else if (format == HN_RENDER_SVG) {
      write_file(path, niche_map_svg(table->table, l, n_niches, s, o));
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown render format");
    }
  });
}

}  // extern "C"
