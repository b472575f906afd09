/* SPDX-License-Identifier: Apache-2.0 */
#ifndef HISTONICHE_H
#define HISTONICHE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(HN_BUILDING_LIBRARY)
#define HN_API __attribute__((visibility("default")))
#else
#define HN_API
#endif

/* Every fallible call returns a status; on failure hn_last_error() holds a
 * one-line message for the calling thread. */
typedef enum hn_status {
  HN_OK = 0,
  HN_ERR_INVALID_ARGUMENT = 1,
  HN_ERR_IO = 2,
  HN_ERR_PARSE = 3,
  HN_ERR_NUMERIC = 4,
  HN_ERR_STATE = 5,
  HN_ERR_SHAPE_MISMATCH = 6,
  HN_ERR_INTERNAL = 99
} hn_status;

typedef struct hn_table hn_table;
typedef struct hn_index hn_index;
typedef struct hn_split hn_split;
typedef struct hn_model hn_model;

HN_API const char* hn_version(void);
HN_API const char* hn_last_error(void);
HN_API const char* hn_status_name(hn_status status);

/* Warnings go to stderr unless a callback is installed (NULL restores). */
typedef void (*hn_warning_fn)(const char* message);
HN_API void hn_set_warning_callback(hn_warning_fn fn);

/* ---- tables ---------------------------------------------------------- */

typedef struct hn_table_schema {
  char delimiter;                /* 0 means ',' */
  double pixel_resolution_um;    /* > 0: coordinates are pixels */
  int teacher_as_probabilities;  /* log-transform teacher columns */
} hn_table_schema;

HN_API hn_status hn_table_load(const char* path, const hn_table_schema* schema, hn_table** out);
HN_API hn_status hn_table_save(const hn_table* table, const char* path);
HN_API void hn_table_free(hn_table* table);
HN_API size_t hn_table_size(const hn_table* table);
HN_API size_t hn_table_embedding_dim(const hn_table* table);
/* 0 when the table has no teacher columns. */
HN_API size_t hn_table_teacher_dim(const hn_table* table);
HN_API size_t hn_table_n_cell_types(const hn_table* table);
HN_API size_t hn_table_n_pathology(const hn_table* table);
HN_API const char* hn_table_cell_type_name(const hn_table* table, size_t code);
/* Dense codes, -1 where missing. Buffers hold hn_table_size() entries. */
HN_API hn_status hn_table_cell_types(const hn_table* table, int* out);
HN_API hn_status hn_table_pathology(const hn_table* table, int* out);
/* HN_ERR_STATE when the table has no planted-niche column. */
HN_API hn_status hn_table_planted_niche(const hn_table* table, int* out);
/* Argmax of each row of teacher logits. */
HN_API hn_status hn_table_teacher_labels(const hn_table* table, int* out);
HN_API hn_status hn_table_coords(const hn_table* table, double* xs, double* ys);

/* ---- synthetic tissue ------------------------------------------------ */

typedef struct hn_synth_params {
  size_t n_cells;
  size_t n_niches;
  size_t n_cell_types;
  size_t embedding_dim;
  double sharpness;
  double noise_sigma;
  uint64_t seed;
  double density_per_um2;
  int plant_pathology;
} hn_synth_params;

HN_API void hn_synth_default_params(hn_synth_params* params);
HN_API hn_status hn_synth_generate(const hn_synth_params* params, hn_table** out);

/* ---- neighborhoods --------------------------------------------------- */

typedef struct hn_calibration {
  double radius_um;
  double mean_count;
  int within_tolerance;
  int iterations;
} hn_calibration;

HN_API hn_status hn_index_build(const hn_table* table, size_t max_neighbors, hn_index** out);
HN_API void hn_index_free(hn_index* index);
/* mask may be NULL (all cells). Sets the index radius on success. */
HN_API hn_status hn_index_calibrate(hn_index* index, size_t target_count, size_t n_samples,
                                    uint64_t seed, const uint8_t* mask, hn_calibration* out);
HN_API hn_status hn_index_set_radius(hn_index* index, double radius_um);
HN_API double hn_index_radius(const hn_index* index);
HN_API double hn_index_bbox_diagonal(const hn_index* index);

/* ---- spatial split --------------------------------------------------- */

enum { HN_SPLIT_TRAIN = 0, HN_SPLIT_TEST = 1, HN_SPLIT_DISCARD = 2 };
enum { HN_AXIS_Y = 0, HN_AXIS_X = 1 };

typedef struct hn_split_options {
  int crop_size_px;
  double resolution_um_per_px;
  int test_strip;
  int axis;
} hn_split_options;

HN_API void hn_split_default_options(hn_split_options* options);
HN_API hn_status hn_split_make(const hn_table* table, const hn_split_options* options, hn_split** out);
HN_API void hn_split_free(hn_split* split);
HN_API double hn_split_buffer_um(const hn_split* split);
HN_API void hn_split_boundaries(const hn_split* split, double out[3]);
HN_API size_t hn_split_count(const hn_split* split, int tag);
HN_API hn_status hn_split_tags(const hn_split* split, uint8_t* out);
HN_API hn_status hn_split_masks(const hn_split* split, uint8_t* train, uint8_t* test);
HN_API const char* hn_split_tag_name(int tag);

/* ---- student model --------------------------------------------------- */

typedef struct hn_model_shape {
  size_t embedding_dim;
  size_t n_frequencies;
  size_t d_model;
  size_t d_ff;
  size_t n_niches;
} hn_model_shape;

HN_API hn_status hn_model_create(const hn_model_shape* shape, double base_wavelength_fraction,
                                 uint64_t seed, hn_model** out);
HN_API hn_status hn_model_load(const char* path, hn_model** out);
HN_API hn_status hn_model_save(const hn_model* model, const char* path);
HN_API void hn_model_free(hn_model* model);
HN_API void hn_model_get_shape(const hn_model* model, hn_model_shape* out);
HN_API size_t hn_model_parameter_count(const hn_model* model);
HN_API double hn_model_radius(const hn_model* model);
HN_API size_t hn_model_max_neighbors(const hn_model* model);
HN_API const char* hn_model_activation(void);

/* ---- distillation ---------------------------------------------------- */

typedef struct hn_distill_config {
  double temperature;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  double adam_beta1;
  double adam_beta2;
  double adam_eps;
  double grad_clip_norm;
  uint64_t seed;
  size_t n_niches;
  size_t n_threads;
} hn_distill_config;

typedef struct hn_train_report {
  double initial_loss;
  double final_train_loss;
  double final_test_loss;
  double wall_seconds;
  size_t n_train;
  size_t n_test;
  size_t steps;
  size_t n_epochs;
} hn_train_report;

HN_API void hn_distill_default_config(hn_distill_config* config);
/* test_mask may be NULL. epoch_loss (capacity cap) may be NULL. */
HN_API hn_status hn_train(const hn_table* table, const hn_index* index, const uint8_t* train_mask,
                          const uint8_t* test_mask, hn_model* model, const hn_distill_config* config,
                          hn_train_report* report, double* epoch_loss, size_t cap);
/* labels: n entries (-1 outside mask); logits: n*K entries or NULL. */
HN_API hn_status hn_infer(const hn_table* table, const hn_index* index, const uint8_t* mask,
                          const hn_model* model, size_t n_threads, int* labels, double* logits);

/* ---- assignment files ------------------------------------------------ */

/* split_tags and logits may be NULL. */
HN_API hn_status hn_assignments_save(const hn_table* table, const int* labels, int n_niches,
                                     const uint8_t* split_tags, const double* logits,
                                     size_t n_logits, const char* path);
/* Labels reordered to table rows. split_tags may be NULL; *has_split is set
 * when the file carries a split column. */
HN_API hn_status hn_assignments_load(const hn_table* table, const char* path, int* labels,
                                     uint8_t* split_tags, int* has_split);

/* ---- evaluation ------------------------------------------------------ */

HN_API hn_status hn_ari(const int* a, const int* b, size_t n, double* out);
HN_API hn_status hn_nmi(const int* a, const int* b, size_t n, double* out);
HN_API hn_status hn_jsd(const double* p, const double* q, size_t n, double* out);

enum { HN_COST_TEACHER_WEIGHTED = 0, HN_COST_UNWEIGHTED = 1 };

typedef struct hn_alignment {
  double weighted_mean_jsd;
  double permutation_fraction;  /* NaN when n_draws == 0 */
  size_t n_excluded_pairs;
} hn_alignment;

/* Cells with a negative label or cell type are skipped. matching (k_teacher
 * entries) and pair_jsd (k_teacher entries) may be NULL. */
HN_API hn_status hn_align(const int* teacher_labels, const int* method_labels, const int* cell_types,
                          size_t n, size_t k_teacher, size_t k_method, size_t n_types, int cost_mode,
                          size_t n_draws, uint64_t seed, hn_alignment* out, int* matching,
                          double* pair_jsd);

typedef struct hn_kmeans_options {
  size_t n_init;
  size_t max_iter;
  uint64_t seed;
} hn_kmeans_options;

HN_API void hn_kmeans_default_options(hn_kmeans_options* options);
/* Fit on fit_mask cells' embeddings, label every cell. */
HN_API hn_status hn_kmeans_baseline(const hn_table* table, const uint8_t* fit_mask, size_t k,
                                    const hn_kmeans_options* options, int* labels);

typedef struct hn_probe_options {
  double c_reg;
  size_t epochs;
  uint64_t seed;
} hn_probe_options;

typedef struct hn_probe_result {
  double macro_f1;
  size_t n_train;
  size_t n_test;
} hn_probe_result;

HN_API void hn_probe_default_options(hn_probe_options* options);
/* per_class_f1 (n_classes entries) may be NULL. */
HN_API hn_status hn_svm_probe(const int* niche_labels, size_t n_niches, const int* pathology,
                              int n_classes, const uint8_t* train_mask, const uint8_t* test_mask,
                              size_t n, const hn_probe_options* options, hn_probe_result* out,
                              double* per_class_f1);

/* ---- rendering ------------------------------------------------------- */

enum { HN_RENDER_SVG = 0, HN_RENDER_PPM = 1 };

typedef struct hn_render_options {
  int format;
  int width_px;
  double dot_radius_px;
  int legend;
  const char* title;  /* may be NULL */
} hn_render_options;

HN_API void hn_render_default_options(hn_render_options* options);
/* split may be NULL. */
HN_API hn_status hn_render_map(const hn_table* table, const int* labels, size_t n_niches,
                               const hn_split* split, const hn_render_options* options,
                               const char* path);

#ifdef __cplusplus
}
#endif

#endif /* HISTONICHE_H */
