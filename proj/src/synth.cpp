// SPDX-License-Identifier: Apache-2.0
#include "histoniche/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "histoniche/error.hpp"
#include "histoniche/rng.hpp"

namespace histoniche::synth {

namespace {

// Mass spread uniformly over all types in a paired-type niche row.
constexpr double kBackgroundMass = 0.04;

std::vector<std::array<double, 2>> place_centers(std::size_t k, double side, Rng& rng) {
  std::vector<std::array<double, 2>> centers;
  // Keep centers apart so no niche collapses to a sliver.
  double min_sep = 0.6 * side / std::sqrt(static_cast<double>(k));
  while (centers.size() < k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const std::array<double, 2> c{rng.uniform(0.0, side), rng.uniform(0.0, side)};
      bool ok = true;
      for (const auto& o : centers) ok = ok && std::hypot(c[0] - o[0], c[1] - o[1]) >= min_sep;
      if (ok) {
        centers.push_back(c);
        placed = true;
      }
    }
    if (!placed) min_sep *= 0.9;
  }
  return centers;
}

// Niche rows mix two distinct cell types over a thin background; once the
// distinct pairs run out, rows are Dirichlet(1) draws.
std::vector<double> make_compositions(std::size_t k, std::size_t c, Rng& rng) {
  std::vector<double> rows(k * c, 0.0);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a + 1; b < c; ++b) pairs.emplace_back(a, b);
  }
  rng.shuffle(pairs);
  for (std::size_t n = 0; n < k; ++n) {
    double* row = rows.data() + n * c;
    if (c == 1) {
      row[0] = 1.0;
    } else if (n < pairs.size()) {
      for (std::size_t t = 0; t < c; ++t) row[t] = kBackgroundMass / static_cast<double>(c);
      row[pairs[n].first] += 0.5 * (1.0 - kBackgroundMass);
      row[pairs[n].second] += 0.5 * (1.0 - kBackgroundMass);
    } else {
      double total = 0.0;
      for (std::size_t t = 0; t < c; ++t) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        row[t] = -std::log(u);
        total += row[t];
      }
      for (std::size_t t = 0; t < c; ++t) row[t] /= total;
    }
  }
  return rows;
}

// Unit prototypes; Gram-Schmidt keeps the first min(C, D) exactly orthogonal.
std::vector<double> make_prototypes(std::size_t c, std::size_t d, Rng& rng) {
  std::vector<double> protos(c * d);
  for (std::size_t t = 0; t < c; ++t) {
    double* v = protos.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) v[j] = rng.normal();
    if (t < d) {
      for (std::size_t s = 0; s < t; ++s) {
        const double* u = protos.data() + s * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += v[j] * u[j];
        for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
      }
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += v[j] * v[j];
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      v[t % d] = 1.0;
      norm = 1.0;
    }
    for (std::size_t j = 0; j < d; ++j) v[j] /= norm;
  }
  return protos;
}

}  // namespace

PlantedTissue generate(const SynthParams& p) {
  if (p.n_niches < 1 || p.n_cells < p.n_niches) {
    fail(ErrorCode::kInvalidArgument, "synth: need n_cells >= K >= 1");
  }
  if (p.n_cell_types < 1 || p.embedding_dim < 1) {
    fail(ErrorCode::kInvalidArgument, "synth: need C >= 1 and D >= 1");
  }
  if (!(p.sharpness > 0.0) || !std::isfinite(p.sharpness)) {
    fail(ErrorCode::kInvalidArgument, "synth: sharpness must be positive");
  }
  if (!(p.noise_sigma >= 0.0) || !(p.density_per_um2 > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "synth: noise_sigma must be >= 0 and density > 0");
  }

  const std::size_t n = p.n_cells, k = p.n_niches, c = p.n_cell_types, d = p.embedding_dim;
  PlantedTissue tissue;
  tissue.n_niches = k;
  tissue.n_cell_types = c;
  tissue.noise_sigma = p.noise_sigma;
  tissue.side_um = std::sqrt(static_cast<double>(n) / p.density_per_um2);
  const double side = tissue.side_um;

  Rng rng(p.seed);
  tissue.niche_centers = place_centers(k, side, rng);
  tissue.composition = make_compositions(k, c, rng);
  const std::vector<double> protos = make_prototypes(c, d, rng);

  const std::size_t width = std::max<std::size_t>(6, std::to_string(n).size());
  std::vector<CellRecord> records(n);
  tissue.true_niche.resize(n);
  tissue.cell_type.resize(n);
  std::vector<double> dist(k);
  for (std::size_t i = 0; i < n; ++i) {
    CellRecord& r = records[i];
    const std::string digits = std::to_string(i);
    r.id = "c" + std::string(width - digits.size(), '0') + digits;
    r.x_um = rng.uniform(0.0, side);
    r.y_um = rng.uniform(0.0, side);

    std::size_t niche = 0;
    for (std::size_t j = 0; j < k; ++j) {
      dist[j] = std::hypot(r.x_um - tissue.niche_centers[j][0], r.y_um - tissue.niche_centers[j][1]);
      if (dist[j] < dist[niche]) niche = j;
    }
    tissue.true_niche[i] = static_cast<int>(niche);

    const double* row = tissue.composition.data() + niche * c;
    double u = rng.uniform();
    std::size_t type = c - 1;
    for (std::size_t t = 0; t < c; ++t) {
      u -= row[t];
      if (u < 0.0) {
        type = t;
        break;
      }
    }
    tissue.cell_type[i] = static_cast<int>(type);
    r.cell_type = "type_" + std::to_string(type);

    r.embedding.resize(d);
    for (std::size_t j = 0; j < d; ++j) r.embedding[j] = protos[type * d + j] + p.noise_sigma * rng.normal();

    std::vector<double> logits(k);
    for (std::size_t j = 0; j < k; ++j) logits[j] = -p.sharpness * dist[j] / side;
    r.teacher_logits = std::move(logits);
    if (p.plant_pathology) r.pathology_label = "Tumor " + std::to_string(1 + niche % 3);
  }
  tissue.cells = CellTable::from_records(std::move(records));
  tissue.cells.set_planted_niche(tissue.true_niche);
  return tissue;
}

eval::CompositionMatrix planted_compositions(const PlantedTissue& tissue,
                                             std::span<const int> labels) {
  return eval::composition(labels, tissue.cell_type, tissue.n_niches, tissue.n_cell_types);
}

}  // namespace histoniche::synth
