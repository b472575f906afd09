// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "histoniche/core_data.hpp"
#include "histoniche/spatial_index.hpp"

namespace histoniche {

struct PositionalEncodingConfig {
  std::size_t n_frequencies = 8;           // F
  double base_wavelength_fraction = 1.0;   // base wavelength as a fraction of r

  std::size_t encoding_dim() const { return 4 * n_frequencies; }
};

struct StudentShape {
  std::size_t embedding_dim = 0;   // D
  std::size_t n_frequencies = 8;   // F
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t n_niches = 0;        // K

  std::size_t token_dim() const { return embedding_dim + 4 * n_frequencies; }
  bool operator==(const StudentShape&) const = default;
};

// Offsets of each parameter block inside the flat parameter vector.
struct ParameterLayout {
  std::size_t w_in, b_in;
  std::size_t ln1_gain, ln1_bias;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_gain, ln2_bias;
  std::size_t w1, b1, w2, b2;
  std::size_t w_head, b_head;
  std::size_t total;

  static ParameterLayout of(const StudentShape& shape);
};

std::size_t parameter_count(const StudentShape& shape);

// Flat parameter vector plus a same-sized gradient buffer. Matrices are
// row-major with shape (out, in).
class StudentParameters {
 public:
  StudentParameters() = default;
  explicit StudentParameters(const StudentShape& shape);

  // Xavier-uniform weights, zero biases, unit norm gains.
  static StudentParameters initialize(const StudentShape& shape, std::uint64_t seed);

  const StudentShape& shape() const { return shape_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  void zero_grads();

  bool all_finite() const;

 private:
  StudentShape shape_{};
  ParameterLayout layout_{};
  std::vector<double> values_;
  std::vector<double> grads_;
};

// Activations of one forward pass, enough to run backward exactly once.
struct ForwardTrace {
  std::size_t n_tokens = 0;
  std::vector<double> tokens;     // n x token_dim
  std::vector<double> xhat1;      // n x d_model, normalized h0
  std::vector<double> inv_std1;   // n
  std::vector<double> n1;         // n x d_model
  std::vector<double> q;          // d_model
  std::vector<double> key_probe;  // Wk^T q
  std::vector<double> attn;       // n
  std::vector<double> mixed;      // sum_j attn_j n1_j
  std::vector<double> ctx;        // Wv mixed + bv
  std::vector<double> xhat2;      // d_model
  double inv_std2 = 0.0;
  std::vector<double> n2;
  std::vector<double> pre_act;    // d_ff
  std::vector<double> act;        // d_ff
  std::vector<double> h2;         // d_model
  bool consumed = true;
};

// Per-member [sin(w x), cos(w x), sin(w y), cos(w y)] for each frequency,
// with w = 2*pi*2^f / base and coordinates divided by radius_um.
std::vector<double> encode_positions(std::span<const RelCoord> rel_coords,
                                     const PositionalEncodingConfig& config, double radius_um);

// Tokens for one neighborhood: [embedding, encoding] per member, center first.
void build_tokens(const CellTable& cells, const Neighborhood& neighborhood,
                  const PositionalEncodingConfig& config, double radius_um,
                  std::vector<double>& tokens);

// Logits for the center token (token 0). `trace` may be null for inference.
std::vector<double> forward(const StudentParameters& params, std::span<const double> tokens,
                            std::size_t n_tokens, ForwardTrace* trace = nullptr);

// Adds dL/dparams into `grads` (same size as the parameter vector).
void backward(const StudentParameters& params, ForwardTrace& trace,
              std::span<const double> dlogits, std::span<double> grads);

// Same, accumulating into the parameters' own gradient buffer.
void backward(StudentParameters& params, ForwardTrace& trace, std::span<const double> dlogits);

double gelu(double x);
double gelu_derivative(double x);

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr const char* kActivationName = "gelu-erf";

// A trained student bundled with the neighborhood settings it was fit under.
struct StudentModel {
  StudentParameters params;
  PositionalEncodingConfig encoding;
  double radius_um = 0.0;
  std::size_t max_neighbors = kDefaultMaxNeighbors;
};

// Versioned text checkpoint with a shape header; values use %.17g.
void save_checkpoint(const StudentModel& model, const std::string& path);
StudentModel load_checkpoint(const std::string& path);
// Throws unless the stored shape equals `expected`.
StudentModel load_checkpoint(const std::string& path, const StudentShape& expected);

}  // namespace histoniche
