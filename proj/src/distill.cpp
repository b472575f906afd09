// SPDX-License-Identifier: Apache-2.0
#include "histoniche/distill.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "histoniche/error.hpp"
#include "histoniche/rng.hpp"

namespace histoniche {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::kNumeric, std::string(what) + " contains a non-finite value");
  }
}

// log softmax(x / tau) with max-subtraction.
void log_soften(std::span<const double> x, double tau, std::vector<double>& out) {
  out.resize(x.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] / tau;
    mx = std::max(mx, out[i]);
  }
  double z = 0.0;
  for (double& v : out) {
    v -= mx;
    z += std::exp(v);
  }
  const double lz = std::log(z);
  for (double& v : out) v -= lz;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(task) for task in [0, n_tasks) on up to n_threads workers.
template <class Fn>
void parallel_for(std::size_t n_tasks, std::size_t n_threads, Fn&& fn) {
  const std::size_t workers = std::min(n_threads, n_tasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t t = next++; t < n_tasks && !failed; t = next++) {
      try {
        fn(t);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::size_t teacher_k(const CellTable& cells, const StudentModel& model, std::size_t config_k) {
  if (!cells.has_teacher()) fail(ErrorCode::kInvalidArgument, "training cells carry no teacher logits");
  const std::size_t k = *cells.teacher_dim();
  if (config_k != 0 && config_k != k) {
    fail(ErrorCode::kShapeMismatch, "config K=" + std::to_string(config_k) +
                                        " but teacher has " + std::to_string(k) + " logits");
  }
  if (model.params.shape().n_niches != k) {
    fail(ErrorCode::kShapeMismatch, "student head has " + std::to_string(model.params.shape().n_niches) +
                                        " outputs but teacher has " + std::to_string(k));
  }
  return k;
}

void check_model(const CellTable& cells, const NeighborhoodIndex& index, const StudentModel& model) {
  const StudentShape& s = model.params.shape();
  if (s.embedding_dim != cells.embedding_dim()) {
    fail(ErrorCode::kShapeMismatch, "student expects D=" + std::to_string(s.embedding_dim) +
                                        ", table has D=" + std::to_string(cells.embedding_dim()));
  }
  if (s.n_frequencies != model.encoding.n_frequencies) {
    fail(ErrorCode::kShapeMismatch, "positional encoding F differs from the student shape");
  }
  if (index.size() != cells.size()) fail(ErrorCode::kShapeMismatch, "index was built over a different table");
  if (!index.calibrated()) fail(ErrorCode::kState, "index radius has not been calibrated");
}

std::vector<std::size_t> masked_cells(std::span<const std::uint8_t> mask, std::size_t n) {
  if (mask.size() != n) fail(ErrorCode::kShapeMismatch, "mask length differs from the table");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

// Per-cell neighborhoods (members and offsets), computed once.
std::vector<Neighborhood> gather(const NeighborhoodIndex& index, std::span<const std::size_t> cells,
                                 std::span<const std::uint8_t> mask, std::size_t n_threads) {
  std::vector<Neighborhood> out(cells.size());
  const std::size_t block = 256;
  parallel_for((cells.size() + block - 1) / block, n_threads, [&](std::size_t b) {
    for (std::size_t i = b * block; i < std::min(cells.size(), (b + 1) * block); ++i) {
      out[i] = index.neighborhood_of(cells[i], mask);
    }
  });
  return out;
}

// Sum of per-sample losses in `samples`, in order; gradients go to `grads`
// when non-empty.
double accumulate(const CellTable& cells, const StudentModel& model,
                  std::span<const Neighborhood> hoods, std::span<const std::size_t> samples,
                  double tau, std::span<double> grads) {
  std::vector<double> tokens;
  ForwardTrace trace;
  double total = 0.0;
  for (std::size_t s : samples) {
    const Neighborhood& nb = hoods[s];
    build_tokens(cells, nb, model.encoding, model.radius_um, tokens);
    const std::vector<double> logits =
        forward(model.params, tokens, nb.members.size(), grads.empty() ? nullptr : &trace);
    const DistillLoss l = distill_loss(cells.teacher_logits(nb.center), logits, tau);
    total += l.loss;
    if (!grads.empty()) backward(model.params, trace, l.grad, grads);
  }
  return total;
}

double mean_loss(const CellTable& cells, const StudentModel& model,
                 std::span<const Neighborhood> hoods, double tau, std::size_t n_threads) {
  if (hoods.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = hoods.size();
  const std::size_t chunks = std::min<std::size_t>(64, n);
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, n_threads, [&](std::size_t c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = c * n / chunks; i < (c + 1) * n / chunks; ++i) idx.push_back(i);
    partial[c] = accumulate(cells, model, hoods, idx, tau, {});
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(n);
}

}  // namespace

void DistillConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::kInvalidArgument, "temperature must be > 0");
  }
  if (batch_size == 0) fail(ErrorCode::kInvalidArgument, "batch_size must be > 0");
  if (!(learning_rate > 0.0)) fail(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) fail(ErrorCode::kInvalidArgument, "adam_eps must be > 0");
  if (!(grad_clip_norm > 0.0)) fail(ErrorCode::kInvalidArgument, "grad_clip_norm must be > 0");
}

std::vector<double> soften(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::kInvalidArgument, "temperature must be > 0");
  if (logits.empty()) fail(ErrorCode::kInvalidArgument, "soften needs at least one logit");
  check_finite(logits, "logits");
  std::vector<double> p;
  log_soften(logits, tau, p);
  for (double& v : p) v = std::exp(v);
  return p;
}

DistillLoss distill_loss(std::span<const double> teacher_logits,
                         std::span<const double> student_logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::kInvalidArgument, "temperature must be > 0");
  if (teacher_logits.size() != student_logits.size()) {
    fail(ErrorCode::kShapeMismatch, "teacher and student logits differ in length");
  }
  if (teacher_logits.empty()) fail(ErrorCode::kInvalidArgument, "empty logit vectors");
  check_finite(teacher_logits, "teacher logits");
  check_finite(student_logits, "student logits");

  std::vector<double> lt, ls;
  log_soften(teacher_logits, tau, lt);
  log_soften(student_logits, tau, ls);
  DistillLoss out;
  out.grad.resize(lt.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    const double pt = std::exp(lt[i]);
    if (pt > 0.0) kl += pt * (lt[i] - ls[i]);
    out.grad[i] = tau * (std::exp(ls[i]) - pt);
  }
  out.loss = tau * tau * std::max(kl, 0.0);
  return out;
}

int argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kInvalidArgument, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

TrainReport train(const CellTable& cells, const NeighborhoodIndex& index,
                  std::span<const std::uint8_t> train_mask,
                  std::span<const std::uint8_t> test_mask, StudentModel& model,
                  const DistillConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  teacher_k(cells, model, config.n_niches);
  check_model(cells, index, model);
  model.radius_um = index.radius_um();
  model.max_neighbors = index.max_neighbors();
  const std::size_t n_threads = resolve_threads(config.n_threads);
  const double tau = config.temperature;

  const std::vector<std::size_t> train_cells = masked_cells(train_mask, cells.size());
  if (train_cells.empty()) fail(ErrorCode::kInvalidArgument, "train mask selects no cells");
  const std::vector<Neighborhood> hoods = gather(index, train_cells, train_mask, n_threads);

  TrainReport report;
  report.n_train = train_cells.size();
  report.initial_loss = mean_loss(cells, model, hoods, tau, n_threads);

  StudentParameters& params = model.params;
  const std::size_t n_params = params.size();
  std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0), grad(n_params);
  std::vector<std::vector<double>> chunk_grads(kGradientChunks, std::vector<double>(n_params));
  std::vector<double> chunk_loss(kGradientChunks);
  std::vector<std::size_t> order(train_cells.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);
  double beta1_pow = 1.0, beta2_pow = 1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::size_t b = stop - start;
      const std::span<const std::size_t> batch(order.data() + start, b);
      parallel_for(kGradientChunks, n_threads, [&](std::size_t c) {
        std::fill(chunk_grads[c].begin(), chunk_grads[c].end(), 0.0);
        chunk_loss[c] = accumulate(cells, model, hoods,
                                   batch.subspan(c * b / kGradientChunks,
                                                 (c + 1) * b / kGradientChunks - c * b / kGradientChunks),
                                   tau, chunk_grads[c]);
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t c = 0; c < kGradientChunks; ++c) {
        epoch_total += chunk_loss[c];
        for (std::size_t i = 0; i < n_params; ++i) grad[i] += chunk_grads[c][i];
      }
      const double inv_b = 1.0 / static_cast<double>(b);
      double norm2 = 0.0;
      for (double& g : grad) {
        g *= inv_b;
        norm2 += g * g;
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        fail(ErrorCode::kNumeric, "non-finite gradient at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(report.steps));
      }
      const double clip = norm > config.grad_clip_norm ? config.grad_clip_norm / norm : 1.0;

      ++report.steps;
      beta1_pow *= config.adam_beta1;
      beta2_pow *= config.adam_beta2;
      const double lr_t = config.learning_rate * std::sqrt(1.0 - beta2_pow) / (1.0 - beta1_pow);
      auto values = params.values();
      for (std::size_t i = 0; i < n_params; ++i) {
        const double g = grad[i] * clip;
        adam_m[i] = config.adam_beta1 * adam_m[i] + (1.0 - config.adam_beta1) * g;
        adam_v[i] = config.adam_beta2 * adam_v[i] + (1.0 - config.adam_beta2) * g * g;
        values[i] -= lr_t * adam_m[i] / (std::sqrt(adam_v[i]) + config.adam_eps);
      }
      if (!params.all_finite()) {
        fail(ErrorCode::kNumeric, "parameters became non-finite at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(report.steps) +
                                      " (gradient norm " + std::to_string(norm) + ")");
      }
    }
    report.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
  }

  report.final_train_loss = config.epochs == 0 ? report.initial_loss
                                               : mean_loss(cells, model, hoods, tau, n_threads);
  report.final_test_loss = std::numeric_limits<double>::quiet_NaN();
  if (!test_mask.empty()) {
    const std::vector<std::size_t> test_cells = masked_cells(test_mask, cells.size());
    report.n_test = test_cells.size();
    if (!test_cells.empty()) {
      const std::vector<Neighborhood> test_hoods = gather(index, test_cells, test_mask, n_threads);
      report.final_test_loss = mean_loss(cells, model, test_hoods, tau, n_threads);
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

double evaluate_loss(const CellTable& cells, const NeighborhoodIndex& index,
                     std::span<const std::uint8_t> mask, const StudentModel& model,
                     double temperature, std::size_t n_threads) {
  teacher_k(cells, model, 0);
  check_model(cells, index, model);
  const std::size_t threads = resolve_threads(n_threads);
  const std::vector<std::size_t> selected = masked_cells(mask, cells.size());
  const std::vector<Neighborhood> hoods = gather(index, selected, mask, threads);
  return mean_loss(cells, model, hoods, temperature, threads);
}

Inference infer(const CellTable& cells, const NeighborhoodIndex& index,
                std::span<const std::uint8_t> mask, const StudentModel& model,
                std::size_t n_threads) {
  check_model(cells, index, model);
  if (std::abs(index.radius_um() - model.radius_um) > 1e-12 * std::max(1.0, model.radius_um)) {
    fail(ErrorCode::kState, "index radius " + std::to_string(index.radius_um()) +
                                " differs from the model's training radius " +
                                std::to_string(model.radius_um));
  }
  const std::size_t threads = resolve_threads(n_threads);
  const std::size_t n = cells.size();
  const std::size_t k = model.params.shape().n_niches;
  const std::vector<std::size_t> selected = masked_cells(mask, n);

  Inference out;
  out.n_niches = k;
  out.logits.assign(n * k, std::numeric_limits<double>::quiet_NaN());
  out.labels.assign(n, -1);
  const std::size_t block = 128;
  parallel_for((selected.size() + block - 1) / block, threads, [&](std::size_t b) {
    std::vector<double> tokens;
    for (std::size_t s = b * block; s < std::min(selected.size(), (b + 1) * block); ++s) {
      const std::size_t cell = selected[s];
      const Neighborhood nb = index.neighborhood_of(cell, mask);
      build_tokens(cells, nb, model.encoding, model.radius_um, tokens);
      const std::vector<double> logits = forward(model.params, tokens, nb.members.size());
      std::copy(logits.begin(), logits.end(), out.logits.begin() + static_cast<std::ptrdiff_t>(cell * k));
      out.labels[cell] = argmax(logits);
    }
  });
  return out;
}

}  // namespace histoniche
