// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "histoniche/histoniche.h"

namespace histoniche::cli {

namespace {

using json = nlohmann::json;

// Stage seeds are fixed offsets from the master seed.
enum SeedStream : std::uint64_t {
  kSeedSynth = 0,
  kSeedCalibrate = 1,
  kSeedInit = 2,
  kSeedTrain = 3,
  kSeedKMeans = 4,
  kSeedProbe = 5,
  kSeedPermutation = 6,
};

void check(hn_status status, const std::string& what) {
  if (status != HN_OK) throw std::runtime_error(what + ": " + hn_last_error());
}

struct TableDeleter {
  void operator()(hn_table* p) const { hn_table_free(p); }
};
struct IndexDeleter {
  void operator()(hn_index* p) const { hn_index_free(p); }
};
struct SplitDeleter {
  void operator()(hn_split* p) const { hn_split_free(p); }
};
struct ModelDeleter {
  void operator()(hn_model* p) const { hn_model_free(p); }
};
using Table = std::unique_ptr<hn_table, TableDeleter>;
using Index = std::unique_ptr<hn_index, IndexDeleter>;
using Split = std::unique_ptr<hn_split, SplitDeleter>;
using Model = std::unique_ptr<hn_model, ModelDeleter>;

std::uint64_t stage_seed(const RunConfig& cfg, SeedStream s) { return cfg.seed("seed") + s; }

json seeds_json(const RunConfig& cfg) {
  return {{"master", cfg.seed("seed")},
          {"synth", stage_seed(cfg, kSeedSynth)},
          {"calibrate", stage_seed(cfg, kSeedCalibrate)},
          {"init", stage_seed(cfg, kSeedInit)},
          {"train", stage_seed(cfg, kSeedTrain)},
          {"kmeans", stage_seed(cfg, kSeedKMeans)},
          {"probe", stage_seed(cfg, kSeedProbe)},
          {"permutation", stage_seed(cfg, kSeedPermutation)}};
}

void ensure_out_dir(const RunConfig& cfg) { std::filesystem::create_directories(cfg.out_dir()); }

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

json manifest_base(const RunConfig& cfg, const char* command) {
  json config = json::object();
  for (const auto& [k, v] : cfg.values()) config[k] = v;
  return {{"tool", "histoniche"},
          {"version", hn_version()},
          {"command", command},
          {"config", config},
          {"seeds", seeds_json(cfg)}};
}

Table synthesize(const RunConfig& cfg) {
  hn_synth_params p;
  hn_synth_default_params(&p);
  p.n_cells = cfg.size("n_cells");
  p.n_niches = cfg.size("n_niches");
  p.n_cell_types = cfg.size("n_cell_types");
  p.embedding_dim = cfg.size("embedding_dim");
  p.sharpness = cfg.real("sharpness");
  p.noise_sigma = cfg.real("noise_sigma");
  p.seed = stage_seed(cfg, kSeedSynth);
  p.density_per_um2 = cfg.real("density");
  p.plant_pathology = cfg.flag("plant_pathology") ? 1 : 0;
  hn_table* t = nullptr;
  check(hn_synth_generate(&p, &t), "synth");
  return Table(t);
}

Table load_table(const RunConfig& cfg) {
  const std::string& path = cfg.str("table");
  if (path.empty()) throw std::invalid_argument("no input table: set --table");
  hn_table_schema schema{};
  const std::string& delim = cfg.str("delimiter");
  if (delim.size() != 1 && delim != "\\t") throw std::invalid_argument("delimiter must be one character");
  schema.delimiter = delim == "\\t" ? '\t' : delim[0];
  schema.pixel_resolution_um = cfg.real("pixel_resolution_um");
  schema.teacher_as_probabilities = cfg.flag("teacher_as_probabilities") ? 1 : 0;
  hn_table* t = nullptr;
  check(hn_table_load(path.c_str(), &schema, &t), "load table");
  return Table(t);
}

Split make_split(const RunConfig& cfg, const hn_table* table) {
  hn_split_options o;
  hn_split_default_options(&o);
  o.crop_size_px = static_cast<int>(cfg.integer("crop_size_px"));
  o.resolution_um_per_px = cfg.real("resolution_um_per_px");
  o.test_strip = static_cast<int>(cfg.integer("test_strip"));
  const std::string& axis = cfg.str("axis");
  if (axis == "y") {
    o.axis = HN_AXIS_Y;
  } else if (axis == "x") {
    o.axis = HN_AXIS_X;
  } else {
    throw std::invalid_argument("axis must be 'x' or 'y'");
  }
  hn_split* s = nullptr;
  check(hn_split_make(table, &o, &s), "split");
  return Split(s);
}

struct Masks {
  std::vector<uint8_t> tags, train, test;
};

Masks masks_of(const hn_split* split, std::size_t n) {
  Masks m{std::vector<uint8_t>(n), std::vector<uint8_t>(n), std::vector<uint8_t>(n)};
  check(hn_split_tags(split, m.tags.data()), "split tags");
  check(hn_split_masks(split, m.train.data(), m.test.data()), "split masks");
  return m;
}

struct Neighborhoods {
  Index index;
  hn_calibration calibration{};
  bool calibrated = false;
};

Neighborhoods build_index(const RunConfig& cfg, const hn_table* table, const Masks& masks) {
  Neighborhoods nb;
  hn_index* idx = nullptr;
  check(hn_index_build(table, cfg.size("max_neighbors"), &idx), "index");
  nb.index.reset(idx);
  const double fixed = cfg.real("radius_um");
  if (fixed > 0.0) {
    check(hn_index_set_radius(idx, fixed), "radius");
    nb.calibration.radius_um = fixed;
    return nb;
  }
  const std::string& on = cfg.str("calibrate_on");
  if (on != "train" && on != "all") throw std::invalid_argument("calibrate_on must be 'train' or 'all'");
  check(hn_index_calibrate(idx, cfg.size("target_count"), cfg.size("n_samples"),
                           stage_seed(cfg, kSeedCalibrate), on == "train" ? masks.train.data() : nullptr,
                           &nb.calibration),
        "calibrate");
  nb.calibrated = true;
  if (!nb.calibration.within_tolerance) {
    std::fprintf(stderr, "histoniche: warning: calibrated mean neighbor count %.3f is outside 5%% of target %zu\n",
                 nb.calibration.mean_count, cfg.size("target_count"));
  }
  return nb;
}

json calibration_json(const Neighborhoods& nb) {
  return {{"radius_um", nb.calibration.radius_um},
          {"mean_count", nb.calibration.mean_count},
          {"calibrated", nb.calibrated},
          {"within_tolerance", nb.calibration.within_tolerance != 0}};
}

std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.str("checkpoint").empty() ? cfg.out_path("student.ckpt") : cfg.str("checkpoint");
}

json shape_json(const hn_model_shape& s) {
  return {{"D", s.embedding_dim}, {"F", s.n_frequencies}, {"d_model", s.d_model}, {"d_ff", s.d_ff},
          {"K", s.n_niches}};
}

struct TrainOutcome {
  Model model;
  hn_train_report report{};
  std::vector<double> epoch_loss;
};

hn_distill_config distill_config(const RunConfig& cfg) {
  hn_distill_config c;
  hn_distill_default_config(&c);
  c.temperature = cfg.real("temperature");
  c.epochs = cfg.size("epochs");
  c.batch_size = cfg.size("batch_size");
  c.learning_rate = cfg.real("learning_rate");
  c.adam_beta1 = cfg.real("adam_beta1");
  c.adam_beta2 = cfg.real("adam_beta2");
  c.adam_eps = cfg.real("adam_eps");
  c.grad_clip_norm = cfg.real("grad_clip_norm");
  c.seed = stage_seed(cfg, kSeedTrain);
  c.n_niches = cfg.size("K");
  c.n_threads = cfg.size("threads");
  return c;
}

TrainOutcome train_student(const RunConfig& cfg, const hn_table* table, const hn_index* index,
                           const Masks& masks) {
  const std::size_t k = hn_table_teacher_dim(table);
  if (k == 0) throw std::invalid_argument("table has no teacher logit columns (t_0..)");
  hn_model_shape shape{hn_table_embedding_dim(table), cfg.size("n_frequencies"), cfg.size("d_model"),
                       cfg.size("d_ff"), k};
  hn_model* m = nullptr;
  check(hn_model_create(&shape, cfg.real("base_wavelength_fraction"), stage_seed(cfg, kSeedInit), &m),
        "model");
  TrainOutcome out{Model(m), {}, std::vector<double>(cfg.size("epochs"))};
  const hn_distill_config c = distill_config(cfg);
  check(hn_train(table, index, masks.train.data(), masks.test.data(), m, &c, &out.report,
                 out.epoch_loss.data(), out.epoch_loss.size()),
        "train");
  return out;
}

json train_json(const RunConfig& cfg, const TrainOutcome& t) {
  hn_model_shape shape;
  hn_model_get_shape(t.model.get(), &shape);
  return {{"shape", shape_json(shape)},
          {"parameter_count", hn_model_parameter_count(t.model.get())},
          {"activation", hn_model_activation()},
          {"grad_clip_norm", cfg.real("grad_clip_norm")},
          {"epoch_loss", t.epoch_loss},
          {"initial_loss", t.report.initial_loss},
          {"final_train_loss", t.report.final_train_loss},
          {"final_test_loss", std::isfinite(t.report.final_test_loss) ? json(t.report.final_test_loss) : json()},
          {"n_train", t.report.n_train},
          {"n_test", t.report.n_test},
          {"steps", t.report.steps},
          {"train_seconds", t.report.wall_seconds}};
}

struct Labels {
  std::vector<int> labels;
  std::vector<double> logits;
  std::size_t k = 0;
};

// Student labels for the cells selected by infer_on; each split side uses its
// own mask for neighborhoods.
Labels run_inference(const RunConfig& cfg, const hn_table* table, const hn_index* index,
                     const hn_model* model, const Masks& masks) {
  const std::size_t n = hn_table_size(table);
  hn_model_shape shape;
  hn_model_get_shape(model, &shape);
  Labels out{std::vector<int>(n, -1),
             std::vector<double>(n * shape.n_niches, std::numeric_limits<double>::quiet_NaN()),
             shape.n_niches};
  const std::string& on = cfg.str("infer_on");
  std::vector<std::vector<uint8_t>> passes;
  if (on == "split") {
    passes = {masks.train, masks.test};
  } else if (on == "test") {
    passes = {masks.test};
  } else if (on == "train") {
    passes = {masks.train};
  } else if (on == "all") {
    passes = {std::vector<uint8_t>(n, 1)};
  } else {
    throw std::invalid_argument("infer_on must be split, test, train or all");
  }
  std::vector<int> labels(n);
  std::vector<double> logits(n * shape.n_niches);
  for (const auto& mask : passes) {
    check(hn_infer(table, index, mask.data(), model, cfg.size("threads"), labels.data(), logits.data()), "infer");
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      out.labels[i] = labels[i];
      std::copy_n(logits.begin() + static_cast<std::ptrdiff_t>(i * shape.n_niches), shape.n_niches,
                  out.logits.begin() + static_cast<std::ptrdiff_t>(i * shape.n_niches));
    }
  }
  return out;
}

std::vector<int> teacher_labels(const hn_table* table) {
  std::vector<int> t(hn_table_size(table));
  check(hn_table_teacher_labels(table, t.data()), "teacher labels");
  return t;
}

int label_count(const std::vector<int>& labels) {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  return k;
}

struct Scores {
  std::size_t n_scored = 0;
  double ari = NAN, nmi = NAN;
  std::optional<hn_alignment> alignment;
  std::vector<int> matching;
};

// Agreement and composition alignment over cells labeled by both sides (and
// in the test split when scope_mask is given).
Scores score(const RunConfig& cfg, const hn_table* table, const std::vector<int>& teacher, std::size_t kt,
             const std::vector<int>& method, std::size_t km, const uint8_t* scope_mask) {
  const std::size_t n = hn_table_size(table);
  std::vector<int> a, b, types_all(n), types;
  check(hn_table_cell_types(table, types_all.data()), "cell types");
  for (std::size_t i = 0; i < n; ++i) {
    if (scope_mask && !scope_mask[i]) continue;
    if (teacher[i] < 0 || method[i] < 0) continue;
    a.push_back(teacher[i]);
    b.push_back(method[i]);
    types.push_back(types_all[i]);
  }
  Scores s;
  s.n_scored = a.size();
  if (a.size() < 2) throw std::runtime_error("fewer than 2 cells carry both labelings");
  check(hn_ari(a.data(), b.data(), a.size(), &s.ari), "ari");
  check(hn_nmi(a.data(), b.data(), a.size(), &s.nmi), "nmi");
  if (hn_table_n_cell_types(table) == 0) {
    std::fprintf(stderr, "histoniche: warning: table has no cell_type column; skipping composition metrics\n");
    return s;
  }
  hn_alignment al{};
  s.matching.assign(kt, -1);
  check(hn_align(a.data(), b.data(), types.data(), a.size(), kt, km, hn_table_n_cell_types(table),
                 HN_COST_TEACHER_WEIGHTED, cfg.size("n_draws"), stage_seed(cfg, kSeedPermutation), &al,
                 s.matching.data(), nullptr),
        "align");
  s.alignment = al;
  return s;
}

json scores_json(const Scores& s) {
  json j = {{"n_scored", s.n_scored}, {"ari", s.ari}, {"nmi", s.nmi}};
  if (s.alignment) {
    j["weighted_mean_jsd"] = s.alignment->weighted_mean_jsd;
    j["permutation_fraction"] =
        std::isfinite(s.alignment->permutation_fraction) ? json(s.alignment->permutation_fraction) : json();
    j["excluded_pairs"] = s.alignment->n_excluded_pairs;
    j["matching"] = s.matching;
  } else {
    j["weighted_mean_jsd"] = json();
    j["permutation_fraction"] = json();
  }
  return j;
}

std::optional<double> probe(const RunConfig& cfg, const hn_table* table, const std::vector<int>& labels,
                            std::size_t k, const Masks& masks) {
  const std::size_t n_classes = hn_table_n_pathology(table);
  if (n_classes < 2) {
    std::fprintf(stderr, "histoniche: warning: fewer than 2 pathology classes; skipping probe\n");
    return std::nullopt;
  }
  std::vector<int> pathology(hn_table_size(table));
  check(hn_table_pathology(table, pathology.data()), "pathology");
  hn_probe_options o;
  hn_probe_default_options(&o);
  o.c_reg = cfg.real("probe_c");
  o.epochs = cfg.size("probe_epochs");
  o.seed = stage_seed(cfg, kSeedProbe);
  hn_probe_result r{};
  check(hn_svm_probe(labels.data(), k, pathology.data(), static_cast<int>(n_classes), masks.train.data(),
                     masks.test.data(), labels.size(), &o, &r, nullptr),
        "probe");
  return r.macro_f1;
}

// Relabels method niches onto their matched teacher niche so both maps share
// colors; unmatched method niches follow after the teacher's.
std::vector<int> aligned_labels(const std::vector<int>& method, const std::vector<int>& matching,
                                std::size_t km, std::size_t& k_out) {
  std::vector<int> to(km, -1);
  for (std::size_t t = 0; t < matching.size(); ++t) {
    if (matching[t] >= 0) to[static_cast<std::size_t>(matching[t])] = static_cast<int>(t);
  }
  int next = static_cast<int>(matching.size());
  for (int& v : to) {
    if (v < 0) v = next++;
  }
  k_out = static_cast<std::size_t>(next);
  std::vector<int> out(method.size(), -1);
  for (std::size_t i = 0; i < method.size(); ++i) {
    if (method[i] >= 0) out[i] = to[static_cast<std::size_t>(method[i])];
  }
  return out;
}

void render(const RunConfig& cfg, const hn_table* table, const std::vector<int>& labels, std::size_t k,
            const hn_split* split, const std::string& path, const std::string& title) {
  hn_render_options o;
  hn_render_default_options(&o);
  const std::string& format = cfg.str("format");
  if (format == "svg") {
    o.format = HN_RENDER_SVG;
  } else if (format == "ppm") {
    o.format = HN_RENDER_PPM;
  } else {
    throw std::invalid_argument("format must be svg or ppm");
  }
  o.width_px = static_cast<int>(cfg.integer("width_px"));
  o.dot_radius_px = cfg.real("dot_radius_px");
  o.title = title.c_str();
  check(hn_render_map(table, labels.data(), k, cfg.flag("overlay") ? split : nullptr, &o, path.c_str()),
        "render");
}

std::string map_extension(const RunConfig& cfg) { return cfg.str("format") == "ppm" ? ".ppm" : ".svg"; }

void print_scores(const char* name, const Scores& s) {
  std::printf("%s: ARI %.4f  NMI %.4f", name, s.ari, s.nmi);
  if (s.alignment) {
    std::printf("  weighted JSD %.5f", s.alignment->weighted_mean_jsd);
    if (std::isfinite(s.alignment->permutation_fraction)) {
      std::printf("  permutation fraction %.5f", s.alignment->permutation_fraction);
    }
  }
  std::printf("  (n=%zu)\n", s.n_scored);
}

std::vector<int> load_labels(const hn_table* table, const std::string& path, std::vector<uint8_t>* split_tags,
                             bool* has_split) {
  std::vector<int> labels(hn_table_size(table));
  int flag = 0;
  std::vector<uint8_t> tags(hn_table_size(table));
  check(hn_assignments_load(table, path.c_str(), labels.data(), tags.data(), &flag), "load " + path);
  if (split_tags) *split_tags = std::move(tags);
  if (has_split) *has_split = flag != 0;
  return labels;
}

}  // namespace

int cmd_synth(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Table table = synthesize(cfg);
  const std::string path = cfg.str("table").empty() ? cfg.out_path("cells.csv") : cfg.str("table");
  check(hn_table_save(table.get(), path.c_str()), "save table");
  json m = manifest_base(cfg, "synth");
  m["outputs"] = {{"table", path}};
  m["n_cells"] = hn_table_size(table.get());
  write_json(cfg.out_path("synth_manifest.json"), m);
  std::printf("wrote %zu cells to %s\n", hn_table_size(table.get()), path.c_str());
  return 0;
}

int cmd_calibrate(const RunConfig& cfg) {
  Table table = load_table(cfg);
  Split split = make_split(cfg, table.get());
  const Masks masks = masks_of(split.get(), hn_table_size(table.get()));
  const Neighborhoods nb = build_index(cfg, table.get(), masks);
  std::printf("radius_um %.6f\nmean_count %.4f\nwithin_tolerance %s\n", nb.calibration.radius_um,
              nb.calibration.mean_count, nb.calibration.within_tolerance ? "true" : "false");
  return 0;
}

int cmd_split(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Table table = load_table(cfg);
  Split split = make_split(cfg, table.get());
  const std::size_t n = hn_table_size(table.get());
  const Masks masks = masks_of(split.get(), n);
  std::vector<int> labels = hn_table_teacher_dim(table.get()) > 0 ? teacher_labels(table.get())
                                                                  : std::vector<int>(n, -1);
  const std::string path = cfg.out_path("split.csv");
  check(hn_assignments_save(table.get(), labels.data(), std::max(1, label_count(labels)), masks.tags.data(),
                            nullptr, 0, path.c_str()),
        "save split");
  double bounds[3];
  hn_split_boundaries(split.get(), bounds);
  json m = manifest_base(cfg, "split");
  m["split"] = {{"buffer_um", hn_split_buffer_um(split.get())},
                {"boundaries_um", {bounds[0], bounds[1], bounds[2]}},
                {"train", hn_split_count(split.get(), HN_SPLIT_TRAIN)},
                {"test", hn_split_count(split.get(), HN_SPLIT_TEST)},
                {"discard", hn_split_count(split.get(), HN_SPLIT_DISCARD)}};
  write_json(cfg.out_path("split_manifest.json"), m);
  std::printf("buffer_um %.4f  train %zu  test %zu  discard %zu -> %s\n", hn_split_buffer_um(split.get()),
              hn_split_count(split.get(), HN_SPLIT_TRAIN), hn_split_count(split.get(), HN_SPLIT_TEST),
              hn_split_count(split.get(), HN_SPLIT_DISCARD), path.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(cfg);
  Table table = load_table(cfg);
  Split split = make_split(cfg, table.get());
  const Masks masks = masks_of(split.get(), hn_table_size(table.get()));
  const Neighborhoods nb = build_index(cfg, table.get(), masks);
  TrainOutcome t = train_student(cfg, table.get(), nb.index.get(), masks);
  const std::string ckpt = checkpoint_path(cfg);
  check(hn_model_save(t.model.get(), ckpt.c_str()), "save checkpoint");
  json m = manifest_base(cfg, "train");
  m["neighborhood"] = calibration_json(nb);
  m["split"] = {{"buffer_um", hn_split_buffer_um(split.get())}};
  m["training"] = train_json(cfg, t);
  m["outputs"] = {{"checkpoint", ckpt}};
  m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(cfg.out_path("train_manifest.json"), m);
  std::printf("r %.4f um  loss %.4f -> %.4f (test %.4f)  checkpoint %s\n", nb.calibration.radius_um,
              t.report.initial_loss, t.report.final_train_loss, t.report.final_test_loss, ckpt.c_str());
  return 0;
}

int cmd_infer(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Table table = load_table(cfg);
  hn_model* m = nullptr;
  const std::string ckpt = checkpoint_path(cfg);
  check(hn_model_load(ckpt.c_str(), &m), "load checkpoint");
  Model model(m);
  Split split = make_split(cfg, table.get());
  const Masks masks = masks_of(split.get(), hn_table_size(table.get()));
  hn_index* idx = nullptr;
  check(hn_index_build(table.get(), hn_model_max_neighbors(m), &idx), "index");
  Index index(idx);
  check(hn_index_set_radius(idx, hn_model_radius(m)), "radius");
  const Labels l = run_inference(cfg, table.get(), idx, m, masks);
  const std::string path =
      cfg.str("assignments").empty() ? cfg.out_path("student_assignments.csv") : cfg.str("assignments");
  check(hn_assignments_save(table.get(), l.labels.data(), static_cast<int>(l.k), masks.tags.data(),
                            l.logits.data(), l.k, path.c_str()),
        "save assignments");
  std::printf("labeled %zu cells -> %s\n",
              static_cast<std::size_t>(std::count_if(l.labels.begin(), l.labels.end(), [](int v) { return v >= 0; })),
              path.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Table table = load_table(cfg);
  if (cfg.str("assignments").empty()) throw std::invalid_argument("eval needs --assignments");
  std::vector<uint8_t> tags;
  bool has_split = false;
  const std::vector<int> method = load_labels(table.get(), cfg.str("assignments"), &tags, &has_split);
  const std::vector<int> teacher =
      cfg.str("teacher").empty() ? teacher_labels(table.get()) : load_labels(table.get(), cfg.str("teacher"), nullptr, nullptr);
  const std::size_t kt = static_cast<std::size_t>(label_count(teacher));
  const std::size_t km = static_cast<std::size_t>(label_count(method));
  if (kt < 2 || km < 2) throw std::invalid_argument("evaluation needs K >= 2 on both sides");

  std::vector<uint8_t> scope;
  const std::string& on = cfg.str("eval_on");
  if (on == "test") {
    if (!has_split) {
      Split split = make_split(cfg, table.get());
      tags = masks_of(split.get(), hn_table_size(table.get())).tags;
    }
    scope.resize(tags.size());
    for (std::size_t i = 0; i < tags.size(); ++i) scope[i] = tags[i] == HN_SPLIT_TEST;
  } else if (on != "all") {
    throw std::invalid_argument("eval_on must be 'test' or 'all'");
  }
  const Scores s = score(cfg, table.get(), teacher, kt, method, km, scope.empty() ? nullptr : scope.data());
  print_scores("method vs teacher", s);
  json out = scores_json(s);
  out["K_teacher"] = kt;
  out["K_method"] = km;
  out["eval_on"] = on;
  write_json(cfg.out_path("eval.json"), out);
  return 0;
}

int cmd_probe(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Table table = load_table(cfg);
  if (cfg.str("assignments").empty()) throw std::invalid_argument("probe needs --assignments");
  const std::vector<int> labels = load_labels(table.get(), cfg.str("assignments"), nullptr, nullptr);
  Split split = make_split(cfg, table.get());
  const Masks masks = masks_of(split.get(), hn_table_size(table.get()));
  const std::size_t k = static_cast<std::size_t>(std::max(1, label_count(labels)));
  const auto f1 = probe(cfg, table.get(), labels, k, masks);
  if (!f1) return 1;
  std::printf("probe macro-F1 %.4f\n", *f1);
  write_json(cfg.out_path("probe.json"), {{"macro_f1", *f1}, {"K", k}});
  return 0;
}

int cmd_render(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Table table = load_table(cfg);
  std::vector<int> labels;
  if (cfg.str("assignments").empty()) {
    labels = teacher_labels(table.get());
  } else {
    labels = load_labels(table.get(), cfg.str("assignments"), nullptr, nullptr);
  }
  Split split = make_split(cfg, table.get());
  const std::string path = cfg.str("map").empty() ? cfg.out_path("niche_map" + map_extension(cfg)) : cfg.str("map");
  render(cfg, table.get(), labels, static_cast<std::size_t>(std::max(1, label_count(labels))), split.get(),
         path, "niche map");
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_pipeline(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(cfg);
  json m = manifest_base(cfg, "pipeline");
  Table table;
  if (cfg.str("table").empty()) {
    table = synthesize(cfg);
    const std::string path = cfg.out_path("cells.csv");
    check(hn_table_save(table.get(), path.c_str()), "save table");
    m["outputs"]["table"] = path;
  } else {
    table = load_table(cfg);
  }
  const std::size_t n = hn_table_size(table.get());
  Split split = make_split(cfg, table.get());
  const Masks masks = masks_of(split.get(), n);
  const Neighborhoods nb = build_index(cfg, table.get(), masks);
  std::printf("split: train %zu  test %zu  discard %zu  (buffer %.3f um)\n",
              hn_split_count(split.get(), HN_SPLIT_TRAIN), hn_split_count(split.get(), HN_SPLIT_TEST),
              hn_split_count(split.get(), HN_SPLIT_DISCARD), hn_split_buffer_um(split.get()));
  std::printf("radius %.4f um (mean neighbors %.3f)\n", nb.calibration.radius_um, nb.calibration.mean_count);

  TrainOutcome t = train_student(cfg, table.get(), nb.index.get(), masks);
  const std::string ckpt = checkpoint_path(cfg);
  check(hn_model_save(t.model.get(), ckpt.c_str()), "save checkpoint");
  std::printf("train: loss %.4f -> %.4f (test %.4f) in %.1f s\n", t.report.initial_loss,
              t.report.final_train_loss, t.report.final_test_loss, t.report.wall_seconds);

  const Labels student = run_inference(cfg, table.get(), nb.index.get(), t.model.get(), masks);
  const std::string student_path = cfg.out_path("student_assignments.csv");
  check(hn_assignments_save(table.get(), student.labels.data(), static_cast<int>(student.k), masks.tags.data(),
                            student.logits.data(), student.k, student_path.c_str()),
        "save assignments");

  const std::vector<int> teacher = teacher_labels(table.get());
  const std::size_t k = hn_table_teacher_dim(table.get());
  const std::string teacher_path = cfg.out_path("teacher_assignments.csv");
  check(hn_assignments_save(table.get(), teacher.data(), static_cast<int>(k), masks.tags.data(), nullptr, 0,
                            teacher_path.c_str()),
        "save teacher assignments");

  hn_kmeans_options ko;
  hn_kmeans_default_options(&ko);
  ko.n_init = cfg.size("kmeans_n_init");
  ko.max_iter = cfg.size("kmeans_max_iter");
  ko.seed = stage_seed(cfg, kSeedKMeans);
  std::vector<int> kmeans(n);
  check(hn_kmeans_baseline(table.get(), masks.train.data(), k, &ko, kmeans.data()), "k-means");
  for (std::size_t i = 0; i < n; ++i) {
    if (masks.tags[i] == HN_SPLIT_DISCARD) kmeans[i] = -1;
  }
  const std::string kmeans_path = cfg.out_path("kmeans_assignments.csv");
  check(hn_assignments_save(table.get(), kmeans.data(), static_cast<int>(k), masks.tags.data(), nullptr, 0,
                            kmeans_path.c_str()),
        "save k-means assignments");

  const Scores s_student = score(cfg, table.get(), teacher, k, student.labels, student.k, masks.test.data());
  const Scores s_kmeans = score(cfg, table.get(), teacher, k, kmeans, k, masks.test.data());
  print_scores("student vs teacher", s_student);
  print_scores("k-means vs teacher", s_kmeans);

  const auto f1_student = probe(cfg, table.get(), student.labels, student.k, masks);
  const auto f1_teacher = probe(cfg, table.get(), teacher, k, masks);
  const auto f1_kmeans = probe(cfg, table.get(), kmeans, k, masks);
  if (f1_student) {
    std::printf("probe macro-F1: student %.4f  teacher %.4f  k-means %.4f\n", *f1_student, *f1_teacher, *f1_kmeans);
  }

  std::size_t k_map = k;
  std::vector<int> student_map = student.labels;
  if (!s_student.matching.empty()) student_map = aligned_labels(student.labels, s_student.matching, student.k, k_map);
  const std::string teacher_map = cfg.out_path("teacher_map" + map_extension(cfg));
  const std::string student_map_path = cfg.out_path("student_map" + map_extension(cfg));
  render(cfg, table.get(), teacher, k, split.get(), teacher_map, "teacher niches");
  render(cfg, table.get(), student_map, std::max(k, k_map), split.get(), student_map_path,
         "student niches (aligned to teacher)");

  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(); };
  json summary = {{"K", k},
                  {"seed", cfg.seed("seed")},
                  {"r", nb.calibration.radius_um},
                  {"ari", s_student.ari},
                  {"nmi", s_student.nmi},
                  {"weighted_mean_jsd", scores_json(s_student)["weighted_mean_jsd"]},
                  {"permutation_fraction", scores_json(s_student)["permutation_fraction"]},
                  {"macro_f1", opt(f1_student)},
                  {"n_test_scored", s_student.n_scored},
                  {"baseline_kmeans", scores_json(s_kmeans)},
                  {"teacher_macro_f1", opt(f1_teacher)},
                  {"kmeans_macro_f1", opt(f1_kmeans)}};
  const std::string summary_path = cfg.out_path("metrics.json");
  write_json(summary_path, summary);

  m["neighborhood"] = calibration_json(nb);
  double bounds[3];
  hn_split_boundaries(split.get(), bounds);
  m["split"] = {{"buffer_um", hn_split_buffer_um(split.get())},
                {"boundaries_um", {bounds[0], bounds[1], bounds[2]}},
                {"train", hn_split_count(split.get(), HN_SPLIT_TRAIN)},
                {"test", hn_split_count(split.get(), HN_SPLIT_TEST)},
                {"discard", hn_split_count(split.get(), HN_SPLIT_DISCARD)}};
  m["training"] = train_json(cfg, t);
  m["outputs"]["checkpoint"] = ckpt;
  m["outputs"]["student_assignments"] = student_path;
  m["outputs"]["teacher_assignments"] = teacher_path;
  m["outputs"]["kmeans_assignments"] = kmeans_path;
  m["outputs"]["metrics"] = summary_path;
  m["outputs"]["teacher_map"] = teacher_map;
  m["outputs"]["student_map"] = student_map_path;
  m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(cfg.out_path("manifest.json"), m);
  std::printf("outputs in %s\n", cfg.out_dir().c_str());
  return 0;
}

}  // namespace histoniche::cli
