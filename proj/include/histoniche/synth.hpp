// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "histoniche/core_data.hpp"
#include "histoniche/eval.hpp"

namespace histoniche::synth {

struct SynthParams {
  std::size_t n_cells = 20000;
  std::size_t n_niches = 8;       // K
  std::size_t n_cell_types = 6;   // C
  std::size_t embedding_dim = 16; // D
  double sharpness = 40.0;        // teacher logit scale
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
  double density_per_um2 = 0.01;  // sets the square's side
  // Adds a pathology column "Tumor 1..3" determined by the planted niche.
  bool plant_pathology = true;
};

// Synthetic tissue with Voronoi niches and a distance-based teacher.
struct PlantedTissue {
  CellTable cells;                                 // teacher logits filled
  std::vector<int> true_niche;
  std::vector<int> cell_type;                      // type index per cell
  std::vector<std::array<double, 2>> niche_centers;
  std::vector<double> composition;                 // K x C, row-stochastic
  std::size_t n_niches = 0;
  std::size_t n_cell_types = 0;
  double noise_sigma = 0.0;
  double side_um = 0.0;
};

PlantedTissue generate(const SynthParams& params);

// Empirical per-niche cell-type composition of the tissue under `labels`.
eval::CompositionMatrix planted_compositions(const PlantedTissue& tissue,
                                             std::span<const int> labels);

}  // namespace histoniche::synth
