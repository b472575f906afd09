// SPDX-License-Identifier: Apache-2.0
#include "histoniche/student.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "histoniche/error.hpp"
#include "histoniche/rng.hpp"

namespace histoniche {

namespace {

// y += W x, W is (rows x cols) row-major.
void gemv_add(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] += s;
  }
}

// y += W^T x, W is (rows x cols) row-major, x has `rows` entries.
void gemv_t_add(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += wr[c] * xr;
  }
}

// G += a b^T
void outer_add(double* g, std::size_t rows, std::size_t cols, const double* a, const double* b) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* gr = g + r * cols;
    for (std::size_t c = 0; c < cols; ++c) gr[c] += ar * b[c];
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Normalizes x into xhat, returns 1/sqrt(var + eps); out = gain * xhat + bias.
double layer_norm(const double* x, std::size_t n, const double* gain, const double* bias,
                  double* xhat, double* out) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < n; ++i) {
    xhat[i] = (x[i] - mean) * inv_std;
    out[i] = gain[i] * xhat[i] + bias[i];
  }
  return inv_std;
}

// Given dL/dout, accumulates gain/bias grads and adds dL/dx into dx.
void layer_norm_backward(const double* dout, const double* xhat, double inv_std, std::size_t n,
                         const double* gain, double* dgain, double* dbias, double* dx,
                         std::vector<double>& scratch) {
  scratch.resize(n);
  double mean_d = 0.0, mean_dx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dgain[i] += dout[i] * xhat[i];
    dbias[i] += dout[i];
    scratch[i] = dout[i] * gain[i];
    mean_d += scratch[i];
    mean_dx += scratch[i] * xhat[i];
  }
  mean_d /= static_cast<double>(n);
  mean_dx /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) dx[i] += inv_std * (scratch[i] - mean_d - xhat[i] * mean_dx);
}

void check_tokens(const StudentShape& s, std::span<const double> tokens, std::size_t n_tokens) {
  if (n_tokens == 0) fail(ErrorCode::kInvalidArgument, "forward needs at least the center token");
  if (tokens.size() != n_tokens * s.token_dim()) {
    fail(ErrorCode::kShapeMismatch, "token buffer has " + std::to_string(tokens.size()) +
                                        " values, expected " + std::to_string(n_tokens) + " x " +
                                        std::to_string(s.token_dim()));
  }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

ParameterLayout ParameterLayout::of(const StudentShape& s) {
  if (s.embedding_dim == 0 || s.d_model == 0 || s.d_ff == 0 || s.n_niches == 0) {
    fail(ErrorCode::kInvalidArgument, "student shape has a zero dimension");
  }
  ParameterLayout l{};
  std::size_t at = 0;
  auto take = [&at](std::size_t n) {
    const std::size_t off = at;
    at += n;
    return off;
  };
  const std::size_t dm = s.d_model;
  l.w_in = take(dm * s.token_dim());
  l.b_in = take(dm);
  l.ln1_gain = take(dm);
  l.ln1_bias = take(dm);
  l.wq = take(dm * dm);
  l.bq = take(dm);
  l.wk = take(dm * dm);
  l.bk = take(dm);
  l.wv = take(dm * dm);
  l.bv = take(dm);
  l.wo = take(dm * dm);
  l.bo = take(dm);
  l.ln2_gain = take(dm);
  l.ln2_bias = take(dm);
  l.w1 = take(s.d_ff * dm);
  l.b1 = take(s.d_ff);
  l.w2 = take(dm * s.d_ff);
  l.b2 = take(dm);
  l.w_head = take(s.n_niches * dm);
  l.b_head = take(s.n_niches);
  l.total = at;
  return l;
}

std::size_t parameter_count(const StudentShape& shape) { return ParameterLayout::of(shape).total; }

StudentParameters::StudentParameters(const StudentShape& shape)
    : shape_(shape), layout_(ParameterLayout::of(shape)),
      values_(layout_.total, 0.0), grads_(layout_.total, 0.0) {}

StudentParameters StudentParameters::initialize(const StudentShape& shape, std::uint64_t seed) {
  StudentParameters p(shape);
  const ParameterLayout& l = p.layout_;
  Rng rng(seed);
  auto xavier = [&](std::size_t off, std::size_t rows, std::size_t cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < rows * cols; ++i) p.values_[off + i] = rng.uniform(-a, a);
  };
  const std::size_t dm = shape.d_model;
  xavier(l.w_in, dm, shape.token_dim());
  xavier(l.wq, dm, dm);
  xavier(l.wk, dm, dm);
  xavier(l.wv, dm, dm);
  xavier(l.wo, dm, dm);
  xavier(l.w1, shape.d_ff, dm);
  xavier(l.w2, dm, shape.d_ff);
  xavier(l.w_head, shape.n_niches, dm);
  std::fill_n(p.values_.begin() + static_cast<std::ptrdiff_t>(l.ln1_gain), dm, 1.0);
  std::fill_n(p.values_.begin() + static_cast<std::ptrdiff_t>(l.ln2_gain), dm, 1.0);
  return p;
}

void StudentParameters::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

bool StudentParameters::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> encode_positions(std::span<const RelCoord> rel_coords,
                                     const PositionalEncodingConfig& config, double radius_um) {
  const std::size_t f_count = config.n_frequencies;
  std::vector<double> out(rel_coords.size() * 4 * f_count);
  const double scale = radius_um > 0.0 ? 1.0 / radius_um : 1.0;
  for (std::size_t m = 0; m < rel_coords.size(); ++m) {
    const double x = rel_coords[m].dx * scale;
    const double y = rel_coords[m].dy * scale;
    double* o = out.data() + m * 4 * f_count;
    for (std::size_t f = 0; f < f_count; ++f) {
      const double omega =
          2.0 * std::numbers::pi * std::ldexp(1.0, static_cast<int>(f)) / config.base_wavelength_fraction;
      o[4 * f + 0] = std::sin(omega * x);
      o[4 * f + 1] = std::cos(omega * x);
      o[4 * f + 2] = std::sin(omega * y);
      o[4 * f + 3] = std::cos(omega * y);
    }
  }
  return out;
}

void build_tokens(const CellTable& cells, const Neighborhood& nb,
                  const PositionalEncodingConfig& config, double radius_um,
                  std::vector<double>& tokens) {
  const std::size_t d = cells.embedding_dim();
  const std::size_t e = config.encoding_dim();
  const std::vector<double> enc = encode_positions(nb.rel_coords, config, radius_um);
  tokens.resize(nb.members.size() * (d + e));
  for (std::size_t m = 0; m < nb.members.size(); ++m) {
    double* t = tokens.data() + m * (d + e);
    const auto emb = cells.embedding(nb.members[m]);
    std::copy(emb.begin(), emb.end(), t);
    std::copy_n(enc.data() + m * e, e, t + d);
  }
}

std::vector<double> forward(const StudentParameters& params, std::span<const double> tokens,
                            std::size_t n_tokens, ForwardTrace* trace) {
  const StudentShape& s = params.shape();
  check_tokens(s, tokens, n_tokens);
  const ParameterLayout& l = params.layout();
  const double* p = params.values().data();
  const std::size_t dm = s.d_model, din = s.token_dim(), dff = s.d_ff, k = s.n_niches;
  const double inv_sqrt_dm = 1.0 / std::sqrt(static_cast<double>(dm));

  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t.n_tokens = n_tokens;
  t.tokens.assign(tokens.begin(), tokens.end());
  t.xhat1.assign(n_tokens * dm, 0.0);
  t.inv_std1.assign(n_tokens, 0.0);
  t.n1.assign(n_tokens * dm, 0.0);

  // Input projection and first norm for every token; h0 of the center is kept
  // for the residual.
  std::vector<double> h0(dm), h0_center(dm);
  for (std::size_t j = 0; j < n_tokens; ++j) {
    std::copy_n(p + l.b_in, dm, h0.begin());
    gemv_add(p + l.w_in, dm, din, tokens.data() + j * din, h0.data());
    if (j == 0) h0_center = h0;
    t.inv_std1[j] = layer_norm(h0.data(), dm, p + l.ln1_gain, p + l.ln1_bias,
                               t.xhat1.data() + j * dm, t.n1.data() + j * dm);
  }

  // Only the center's query is needed. score_j = (Wq n1_0 + bq).(Wk n1_j + bk)
  // is evaluated as n1_j.(Wk^T q) + bk.q without forming keys.
  t.q.assign(p + l.bq, p + l.bq + dm);
  gemv_add(p + l.wq, dm, dm, t.n1.data(), t.q.data());
  t.key_probe.assign(dm, 0.0);
  gemv_t_add(p + l.wk, dm, dm, t.q.data(), t.key_probe.data());
  const double bias_score = dot(p + l.bk, t.q.data(), dm);
  t.attn.resize(n_tokens);
  double max_score = -INFINITY;
  for (std::size_t j = 0; j < n_tokens; ++j) {
    t.attn[j] = (dot(t.n1.data() + j * dm, t.key_probe.data(), dm) + bias_score) * inv_sqrt_dm;
    max_score = std::max(max_score, t.attn[j]);
  }
  double z = 0.0;
  for (double& a : t.attn) {
    a = std::exp(a - max_score);
    z += a;
  }
  for (double& a : t.attn) a /= z;

  // Attention weights sum to one, so sum_j a_j (Wv n1_j + bv) = Wv mixed + bv.
  t.mixed.assign(dm, 0.0);
  for (std::size_t j = 0; j < n_tokens; ++j) {
    const double* nj = t.n1.data() + j * dm;
    for (std::size_t c = 0; c < dm; ++c) t.mixed[c] += t.attn[j] * nj[c];
  }
  t.ctx.assign(p + l.bv, p + l.bv + dm);
  gemv_add(p + l.wv, dm, dm, t.mixed.data(), t.ctx.data());

  std::vector<double> h1 = h0_center;
  for (std::size_t c = 0; c < dm; ++c) h1[c] += p[l.bo + c];
  gemv_add(p + l.wo, dm, dm, t.ctx.data(), h1.data());

  t.xhat2.assign(dm, 0.0);
  t.n2.assign(dm, 0.0);
  t.inv_std2 = layer_norm(h1.data(), dm, p + l.ln2_gain, p + l.ln2_bias, t.xhat2.data(), t.n2.data());

  t.pre_act.assign(p + l.b1, p + l.b1 + dff);
  gemv_add(p + l.w1, dff, dm, t.n2.data(), t.pre_act.data());
  t.act.resize(dff);
  for (std::size_t i = 0; i < dff; ++i) t.act[i] = gelu(t.pre_act[i]);

  t.h2 = h1;
  for (std::size_t c = 0; c < dm; ++c) t.h2[c] += p[l.b2 + c];
  gemv_add(p + l.w2, dm, dff, t.act.data(), t.h2.data());

  std::vector<double> logits(p + l.b_head, p + l.b_head + k);
  gemv_add(p + l.w_head, k, dm, t.h2.data(), logits.data());
  t.consumed = false;
  return logits;
}

void backward(const StudentParameters& params, ForwardTrace& t, std::span<const double> dlogits,
              std::span<double> grads) {
  if (t.consumed) fail(ErrorCode::kState, "forward trace already consumed (or never filled)");
  const StudentShape& s = params.shape();
  const ParameterLayout& l = params.layout();
  if (dlogits.size() != s.n_niches) fail(ErrorCode::kShapeMismatch, "dlogits length != K");
  if (grads.size() != l.total) fail(ErrorCode::kShapeMismatch, "gradient buffer size mismatch");
  if (t.tokens.size() != t.n_tokens * s.token_dim() || t.h2.size() != s.d_model) {
    fail(ErrorCode::kShapeMismatch, "trace does not match these parameters");
  }
  t.consumed = true;

  const double* p = params.values().data();
  double* g = grads.data();
  const std::size_t n = t.n_tokens, dm = s.d_model, din = s.token_dim(), dff = s.d_ff,
                    k = s.n_niches;
  const double inv_sqrt_dm = 1.0 / std::sqrt(static_cast<double>(dm));
  std::vector<double> scratch;

  // Head.
  outer_add(g + l.w_head, k, dm, dlogits.data(), t.h2.data());
  for (std::size_t i = 0; i < k; ++i) g[l.b_head + i] += dlogits[i];
  std::vector<double> dh2(dm, 0.0);
  gemv_t_add(p + l.w_head, k, dm, dlogits.data(), dh2.data());

  // Feed-forward block with residual: dh1 starts as dh2.
  std::vector<double> dh1 = dh2;
  outer_add(g + l.w2, dm, dff, dh2.data(), t.act.data());
  for (std::size_t c = 0; c < dm; ++c) g[l.b2 + c] += dh2[c];
  std::vector<double> dpre(dff, 0.0);
  gemv_t_add(p + l.w2, dm, dff, dh2.data(), dpre.data());
  for (std::size_t i = 0; i < dff; ++i) dpre[i] *= gelu_derivative(t.pre_act[i]);
  outer_add(g + l.w1, dff, dm, dpre.data(), t.n2.data());
  for (std::size_t i = 0; i < dff; ++i) g[l.b1 + i] += dpre[i];
  std::vector<double> dn2(dm, 0.0);
  gemv_t_add(p + l.w1, dff, dm, dpre.data(), dn2.data());
  layer_norm_backward(dn2.data(), t.xhat2.data(), t.inv_std2, dm, p + l.ln2_gain,
                      g + l.ln2_gain, g + l.ln2_bias, dh1.data(), scratch);

  // Attention output and residual into the center's h0.
  std::vector<double> dh0(n * dm, 0.0);
  std::copy(dh1.begin(), dh1.end(), dh0.begin());
  outer_add(g + l.wo, dm, dm, dh1.data(), t.ctx.data());
  for (std::size_t c = 0; c < dm; ++c) g[l.bo + c] += dh1[c];
  std::vector<double> dctx(dm, 0.0);
  gemv_t_add(p + l.wo, dm, dm, dh1.data(), dctx.data());

  outer_add(g + l.wv, dm, dm, dctx.data(), t.mixed.data());
  for (std::size_t c = 0; c < dm; ++c) g[l.bv + c] += dctx[c];
  std::vector<double> dmixed(dm, 0.0);
  gemv_t_add(p + l.wv, dm, dm, dctx.data(), dmixed.data());

  // dL/da_j = v_j.dctx; the bv.dctx part is shared by all j and cancels in the
  // softmax backward, leaving n1_j.dmixed.
  std::vector<double> dn1(n * dm, 0.0);
  std::vector<double> dscore(n);
  double weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double* nj = t.n1.data() + j * dm;
    double* dnj = dn1.data() + j * dm;
    for (std::size_t c = 0; c < dm; ++c) dnj[c] += t.attn[j] * dmixed[c];
    dscore[j] = dot(nj, dmixed.data(), dm);
    weighted += t.attn[j] * dscore[j];
  }
  double dscore_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    dscore[j] = t.attn[j] * (dscore[j] - weighted) * inv_sqrt_dm;
    dscore_sum += dscore[j];
  }

  // score_j = n1_j.key_probe + bk.q, key_probe = Wk^T q.
  std::vector<double> dprobe(dm, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double* nj = t.n1.data() + j * dm;
    double* dnj = dn1.data() + j * dm;
    for (std::size_t c = 0; c < dm; ++c) {
      dnj[c] += dscore[j] * t.key_probe[c];
      dprobe[c] += dscore[j] * nj[c];
    }
  }
  outer_add(g + l.wk, dm, dm, t.q.data(), dprobe.data());
  std::vector<double> dq(dm, 0.0);
  gemv_add(p + l.wk, dm, dm, dprobe.data(), dq.data());
  for (std::size_t c = 0; c < dm; ++c) {
    g[l.bk + c] += dscore_sum * t.q[c];
    dq[c] += dscore_sum * p[l.bk + c];
  }

  outer_add(g + l.wq, dm, dm, dq.data(), t.n1.data());
  for (std::size_t c = 0; c < dm; ++c) g[l.bq + c] += dq[c];
  gemv_t_add(p + l.wq, dm, dm, dq.data(), dn1.data());

  // First norm and input projection, per token.
  for (std::size_t j = 0; j < n; ++j) {
    double* dhj = dh0.data() + j * dm;
    layer_norm_backward(dn1.data() + j * dm, t.xhat1.data() + j * dm, t.inv_std1[j], dm,
                        p + l.ln1_gain, g + l.ln1_gain, g + l.ln1_bias, dhj, scratch);
    outer_add(g + l.w_in, dm, din, dhj, t.tokens.data() + j * din);
    for (std::size_t c = 0; c < dm; ++c) g[l.b_in + c] += dhj[c];
  }
}

void backward(StudentParameters& params, ForwardTrace& trace, std::span<const double> dlogits) {
  backward(params, trace, dlogits, params.grads());
}

}  // namespace histoniche
