// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace histoniche::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw std::invalid_argument("config key '" + key + "': '" + value + "' is not " + kind);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"run", "seed", "7", "master seed; stage seeds derive from it"},
      {"run", "out_dir", "", "output directory (default $HISTONICHE_OUT_DIR or histoniche_out)"},
      {"run", "table", "", "input cell table (pipeline synthesizes one when empty)"},
      {"run", "threads", "0", "worker threads, 0 = all cores"},
      {"synth", "n_cells", "20000", "synthetic cell count"},
      {"synth", "n_niches", "8", "planted niches K"},
      {"synth", "n_cell_types", "6", "cell types C"},
      {"synth", "embedding_dim", "16", "embedding dimension D"},
      {"synth", "sharpness", "40", "teacher logit scale"},
      {"synth", "noise_sigma", "0.1", "embedding noise"},
      {"synth", "density", "0.01", "cells per square micron"},
      {"synth", "plant_pathology", "true", "add a pathology column tied to the planted niche"},
      {"data", "delimiter", ",", "table field delimiter"},
      {"data", "pixel_resolution_um", "0", "> 0: table coordinates are pixels of this size"},
      {"data", "teacher_as_probabilities", "false", "log-transform teacher columns on load"},
      {"neighborhood", "target_count", "20", "expected neighbors per cell, center included"},
      {"neighborhood", "n_samples", "1000", "calibration sample locations"},
      {"neighborhood", "max_neighbors", "64", "token cap per neighborhood"},
      {"neighborhood", "calibrate_on", "train", "cells used for calibration: train or all"},
      {"neighborhood", "radius_um", "0", "> 0: skip calibration and use this radius"},
      {"split", "crop_size_px", "224", "crop edge in pixels"},
      {"split", "resolution_um_per_px", "0.274", "microns per pixel"},
      {"split", "test_strip", "1", "held-out strip, 0 = top"},
      {"split", "axis", "y", "strip axis: y (horizontal strips) or x"},
      {"model", "d_model", "64", "transformer width"},
      {"model", "d_ff", "128", "feed-forward width"},
      {"model", "n_frequencies", "8", "positional encoding frequencies F"},
      {"model", "base_wavelength_fraction", "1.0", "base wavelength as a fraction of r"},
      {"model", "checkpoint", "", "checkpoint path (default <out_dir>/student.ckpt)"},
      {"distill", "temperature", "2.0", "distillation temperature"},
      {"distill", "epochs", "20", "training epochs"},
      {"distill", "batch_size", "64", "mini-batch size"},
      {"distill", "learning_rate", "0.001", "Adam step size"},
      {"distill", "adam_beta1", "0.9", "Adam beta1"},
      {"distill", "adam_beta2", "0.999", "Adam beta2"},
      {"distill", "adam_eps", "1e-8", "Adam epsilon"},
      {"distill", "grad_clip_norm", "5.0", "global gradient-norm clip"},
      {"distill", "K", "0", "niche count; 0 = teacher column count"},
      {"eval", "assignments", "", "method assignments file"},
      {"eval", "teacher", "", "teacher assignments file (default: table teacher argmax)"},
      {"eval", "eval_on", "test", "cells scored: test or all"},
      {"eval", "n_draws", "10000", "random pairings in the permutation test"},
      {"eval", "kmeans_n_init", "4", "k-means restarts"},
      {"eval", "kmeans_max_iter", "100", "k-means iterations"},
      {"eval", "probe_c", "1.0", "SVM regularization C"},
      {"eval", "probe_epochs", "30", "SVM passes"},
      {"eval", "infer_on", "split", "cells labeled by infer: split (train and test, each from its own mask), test, train or all"},
      {"render", "map", "", "output map path (default <out_dir>/niche_map.svg)"},
      {"render", "format", "svg", "svg or ppm"},
      {"render", "width_px", "800", "plot width"},
      {"render", "dot_radius_px", "2", "dot radius"},
      {"render", "overlay", "true", "draw split boundaries and buffers"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const nlohmann::json manifest = nlohmann::json::parse(text);
    if (!manifest.contains("config") || !manifest["config"].is_object()) {
      throw std::runtime_error("'" + path + "': manifest has no \"config\" object");
    }
    for (const auto& [key, value] : manifest["config"].items()) {
      set(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return;
  }

  std::istringstream lines(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const auto key_def = std::find_if(config_keys().begin(), config_keys().end(),
                                   [&](const ConfigKey& k) { return key == k.name; });
    if (key_def == config_keys().end()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!section.empty() && section != key_def->section) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": key '" + key +
                               "' belongs in [" + key_def->section + "], not [" + section + "]");
    }
    set(key, trim(line.substr(eq + 1)));
  }
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("unregistered config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = str(key);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0 || !std::isfinite(d)) bad_value(key, v, "a finite number");
  return d;
}

long long RunConfig::integer(const std::string& key) const {
  const std::string& v = str(key);
  char* end = nullptr;
  errno = 0;
  const long long n = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) bad_value(key, v, "an integer");
  return n;
}

std::size_t RunConfig::size(const std::string& key) const {
  const long long n = integer(key);
  if (n < 0) bad_value(key, str(key), "a non-negative integer");
  return static_cast<std::size_t>(n);
}

std::uint64_t RunConfig::seed(const std::string& key) const {
  const std::string& v = str(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || *end != '\0' || errno != 0) bad_value(key, v, "an unsigned integer");
  return n;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string RunConfig::out_dir() const {
  if (!str("out_dir").empty()) return str("out_dir");
  if (const char* env = std::getenv("HISTONICHE_OUT_DIR"); env && *env) return env;
  return "histoniche_out";
}

std::string RunConfig::out_path(const std::string& file) const { return out_dir() + "/" + file; }

}  // namespace histoniche::cli
