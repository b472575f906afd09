/* SPDX-License-Identifier: Apache-2.0 */
/* End-to-end use of the C interface from C: synthesize, split, calibrate,
 * train briefly, infer, score, save and reload. argv[1] is a scratch dir. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/stat.h>

#include "histoniche/histoniche.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__,     \
              __LINE__, #cond);                                        \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

#define OK(call)                                                       \
  do {                                                                 \
    hn_status s_ = (call);                                             \
    if (s_ != HN_OK) {                                                 \
      fprintf(stderr, "%s:%d: %s -> %s: %s\n", __FILE__, __LINE__,     \
              #call, hn_status_name(s_), hn_last_error());             \
      exit(1);                                                         \
    }                                                                  \
  } while (0)

static int warnings_seen = 0;
static void on_warning(const char* message) {
  (void)message;
  ++warnings_seen;
}

static void join(char* out, size_t cap, const char* dir, const char* name) {
  snprintf(out, cap, "%s/%s", dir, name);
}

int main(int argc, char** argv) {
  const char* dir = argc > 1 ? argv[1] : ".";
  char path[1024];
  mkdir(dir, 0755);

  EXPECT(strlen(hn_version()) > 0);
  EXPECT(strlen(hn_status_name(HN_ERR_IO)) > 0);
  hn_set_warning_callback(on_warning);

  /* Errors are reported through status codes and hn_last_error. */
  hn_table* missing = NULL;
  EXPECT(hn_table_load("/nonexistent/cells.csv", NULL, &missing) == HN_ERR_IO);
  EXPECT(missing == NULL);
  EXPECT(strstr(hn_last_error(), "cannot open") != NULL);
  EXPECT(hn_table_load(NULL, NULL, &missing) == HN_ERR_INVALID_ARGUMENT);

  hn_synth_params sp;
  hn_synth_default_params(&sp);
  sp.n_cells = 1200;
  sp.n_niches = 4;
  sp.n_cell_types = 4;
  sp.embedding_dim = 6;
  hn_table* table = NULL;
  OK(hn_synth_generate(&sp, &table));
  const size_t n = hn_table_size(table);
  EXPECT(n == 1200);
  EXPECT(hn_table_embedding_dim(table) == 6);
  EXPECT(hn_table_teacher_dim(table) == 4);
  EXPECT(hn_table_n_pathology(table) == 3);

  join(path, sizeof path, dir, "cells.csv");
  OK(hn_table_save(table, path));
  hn_table* reloaded = NULL;
  OK(hn_table_load(path, NULL, &reloaded));
  EXPECT(hn_table_size(reloaded) == n);
  hn_table_free(reloaded);

  hn_split_options so;
  hn_split_default_options(&so);
  hn_split* split = NULL;
  OK(hn_split_make(table, &so, &split));
  EXPECT(fabs(hn_split_buffer_um(split) - 30.688) < 1e-9);
  EXPECT(hn_split_count(split, HN_SPLIT_TRAIN) + hn_split_count(split, HN_SPLIT_TEST) +
             hn_split_count(split, HN_SPLIT_DISCARD) == n);
  EXPECT(strcmp(hn_split_tag_name(HN_SPLIT_TEST), "test") == 0);

  uint8_t* train = malloc(n);
  uint8_t* test = malloc(n);
  uint8_t* tags = malloc(n);
  OK(hn_split_masks(split, train, test));
  OK(hn_split_tags(split, tags));

  hn_index* index = NULL;
  OK(hn_index_build(table, 64, &index));
  hn_calibration cal;
  OK(hn_index_calibrate(index, 12, 300, 1, train, &cal));
  EXPECT(cal.radius_um > 0.0);
  EXPECT(hn_index_radius(index) == cal.radius_um);

  hn_model_shape shape = {6, 2, 8, 16, 4};
  hn_model* model = NULL;
  OK(hn_model_create(&shape, 1.0, 3, &model));
  EXPECT(hn_model_parameter_count(model) > 0);
  EXPECT(strcmp(hn_model_activation(), "gelu-erf") == 0);

  hn_distill_config dc;
  hn_distill_default_config(&dc);
  dc.epochs = 2;
  dc.batch_size = 32;
  hn_train_report report;
  double epoch_loss[4] = {0};
  OK(hn_train(table, index, train, test, model, &dc, &report, epoch_loss, 4));
  EXPECT(report.n_epochs == 2);
  EXPECT(epoch_loss[0] > 0.0);
  EXPECT(report.final_train_loss < report.initial_loss);
  EXPECT(hn_model_radius(model) == cal.radius_um);

  int* labels = malloc(n * sizeof(int));
  double* logits = malloc(n * 4 * sizeof(double));
  OK(hn_infer(table, index, test, model, 1, labels, logits));
  size_t labeled = 0;
  for (size_t i = 0; i < n; ++i) {
    if (test[i]) {
      EXPECT(labels[i] >= 0 && labels[i] < 4);
      ++labeled;
    } else {
      EXPECT(labels[i] == -1);
    }
  }
  EXPECT(labeled == hn_split_count(split, HN_SPLIT_TEST));

  join(path, sizeof path, dir, "student.ckpt");
  OK(hn_model_save(model, path));
  hn_model* loaded = NULL;
  OK(hn_model_load(path, &loaded));
  hn_model_shape got;
  hn_model_get_shape(loaded, &got);
  EXPECT(got.d_model == 8 && got.n_niches == 4);
  hn_model_free(loaded);

  join(path, sizeof path, dir, "assignments.csv");
  OK(hn_assignments_save(table, labels, 4, tags, logits, 4, path));
  int* back = malloc(n * sizeof(int));
  uint8_t* back_tags = malloc(n);
  int has_split = 0;
  OK(hn_assignments_load(table, path, back, back_tags, &has_split));
  EXPECT(has_split == 1);
  EXPECT(memcmp(back, labels, n * sizeof(int)) == 0);
  EXPECT(memcmp(back_tags, tags, n) == 0);

  /* Metrics on the test cells against the teacher. */
  int* teacher = malloc(n * sizeof(int));
  int* types = malloc(n * sizeof(int));
  int* pathology = malloc(n * sizeof(int));
  OK(hn_table_teacher_labels(table, teacher));
  OK(hn_table_cell_types(table, types));
  OK(hn_table_pathology(table, pathology));
  double ari = 0.0, nmi = 0.0;
  OK(hn_ari(teacher, teacher, n, &ari));
  EXPECT(ari == 1.0);
  OK(hn_nmi(teacher, teacher, n, &nmi));
  EXPECT(fabs(nmi - 1.0) < 1e-12);

  int* t_test = malloc(n * sizeof(int));
  int* s_test = malloc(n * sizeof(int));
  int* c_test = malloc(n * sizeof(int));
  size_t m = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!test[i]) continue;
    t_test[m] = teacher[i];
    s_test[m] = labels[i];
    c_test[m] = types[i];
    ++m;
  }
  hn_alignment al;
  int matching[4];
  OK(hn_align(t_test, t_test, c_test, m, 4, 4, hn_table_n_cell_types(table), HN_COST_TEACHER_WEIGHTED,
              200, 1, &al, matching, NULL));
  EXPECT(al.weighted_mean_jsd == 0.0);
  OK(hn_align(t_test, s_test, c_test, m, 4, 4, hn_table_n_cell_types(table), HN_COST_UNWEIGHTED,
              0, 1, &al, NULL, NULL));
  EXPECT(isnan(al.permutation_fraction));

  double p[2] = {1.0, 0.0}, q[2] = {0.0, 1.0}, d = 0.0;
  OK(hn_jsd(p, q, 2, &d));
  EXPECT(fabs(d - 1.0) < 1e-15);
  double bad[2] = {0.7, 0.7};
  EXPECT(hn_jsd(p, bad, 2, &d) == HN_ERR_INVALID_ARGUMENT);

  hn_kmeans_options ko;
  hn_kmeans_default_options(&ko);
  int* km = malloc(n * sizeof(int));
  OK(hn_kmeans_baseline(table, train, 4, &ko, km));

  hn_probe_options po;
  hn_probe_default_options(&po);
  hn_probe_result pr;
  double per_class[3];
  /* Interleaved masks so every class is present on both sides. */
  uint8_t* even = malloc(n);
  uint8_t* odd = malloc(n);
  for (size_t i = 0; i < n; ++i) {
    even[i] = (uint8_t)(i % 2 == 0);
    odd[i] = (uint8_t)(i % 2 == 1);
  }
  OK(hn_svm_probe(teacher, 4, pathology, 3, even, odd, n, &po, &pr, per_class));
  EXPECT(pr.macro_f1 == 1.0);
  free(even);
  free(odd);

  hn_render_options ro;
  hn_render_default_options(&ro);
  join(path, sizeof path, dir, "map.svg");
  OK(hn_render_map(table, labels, 4, split, &ro, path));
  ro.format = HN_RENDER_PPM;
  join(path, sizeof path, dir, "map.ppm");
  OK(hn_render_map(table, labels, 4, NULL, &ro, path));

  /* Shape mismatch between model and table. */
  hn_model_shape wrong = {5, 2, 8, 16, 4};
  hn_model* wrong_model = NULL;
  OK(hn_model_create(&wrong, 1.0, 3, &wrong_model));
  EXPECT(hn_train(table, index, train, test, wrong_model, &dc, &report, NULL, 0) ==
         HN_ERR_SHAPE_MISMATCH);
  hn_model_free(wrong_model);

  free(train);
  free(test);
  free(tags);
  free(labels);
  free(logits);
  free(back);
  free(back_tags);
  free(teacher);
  free(types);
  free(pathology);
  free(t_test);
  free(s_test);
  free(c_test);
  free(km);
  hn_model_free(model);
  hn_index_free(index);
  hn_split_free(split);
  hn_table_free(table);
  hn_table_free(NULL);

  if (failures) {
    fprintf(stderr, "%d expectation(s) failed\n", failures);
    return 1;
  }
  printf("C API smoke test passed\n");
  return 0;
}
