// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "histoniche/core_data.hpp"
#include "histoniche/spatial_index.hpp"
#include "histoniche/student.hpp"

namespace histoniche {

struct DistillConfig {
  double temperature = 2.0;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::size_t n_niches = 0;   // 0: take K from the teacher columns
  std::size_t n_threads = 0;  // 0: hardware concurrency

  void validate() const;
};

// Batches are split into this many fixed chunks whose gradients are summed in
// chunk order, so results do not depend on the worker count.
inline constexpr std::size_t kGradientChunks = 8;

// softmax(logits / tau), with max-subtraction.
std::vector<double> soften(std::span<const double> logits, double tau);

struct DistillLoss {
  double loss = 0.0;
  std::vector<double> grad;  // dL/d student logits
};

// tau^2 * KL(soften(teacher) || soften(student)) for one sample.
DistillLoss distill_loss(std::span<const double> teacher_logits,
                         std::span<const double> student_logits, double tau);

struct TrainReport {
  std::vector<double> epoch_loss;   // mean sample loss seen during each epoch
  double initial_loss = 0.0;        // mean train loss before the first update
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;     // NaN when no test cells were given
  double wall_seconds = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t steps = 0;
};

// Mini-batch Adam on the train cells. Neighborhoods are drawn from the train
// mask only; `index` must carry the radius the student is trained at.
// The test mask (may be empty) is only used for the final test loss.
TrainReport train(const CellTable& cells, const NeighborhoodIndex& index,
                  std::span<const std::uint8_t> train_mask,
                  std::span<const std::uint8_t> test_mask, StudentModel& model,
                  const DistillConfig& config);

// Mean distillation loss over the masked cells, neighborhoods from the mask.
double evaluate_loss(const CellTable& cells, const NeighborhoodIndex& index,
                     std::span<const std::uint8_t> mask, const StudentModel& model,
                     double temperature, std::size_t n_threads = 0);

struct Inference {
  std::size_t n_niches = 0;
  std::vector<double> logits;  // n x K; NaN rows outside the mask
  std::vector<int> labels;     // -1 outside the mask
};

// Labels every masked cell from its masked neighborhood.
Inference infer(const CellTable& cells, const NeighborhoodIndex& index,
                std::span<const std::uint8_t> mask, const StudentModel& model,
                std::size_t n_threads = 0);

// Index of the largest value; ties go to the smallest index.
int argmax(std::span<const double> values);

}  // namespace histoniche
