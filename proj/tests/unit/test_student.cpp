// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "histoniche/distill.hpp"
#include "histoniche/rng.hpp"
#include "histoniche/student.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace histoniche;

namespace {

StudentShape tiny_shape(std::size_t d, std::size_t f, std::size_t dm, std::size_t dff, std::size_t k) {
  StudentShape s;
  s.embedding_dim = d;
  s.n_frequencies = f;
  s.d_model = dm;
  s.d_ff = dff;
  s.n_niches = k;
  return s;
}

// Every entry (biases and norm gains included) drawn at random so each
// parameter block takes part in the check.
StudentParameters random_params(const StudentShape& s, Rng& rng, double scale = 0.5) {
  StudentParameters p(s);
  for (double& v : p.values()) v = scale * rng.normal();
  return p;
}

std::vector<double> random_tokens(const StudentShape& s, std::size_t n, Rng& rng) {
  std::vector<double> t(n * s.token_dim());
  for (double& v : t) v = rng.normal();
  return t;
}

// The absolute floor sits above central-difference roundoff (about
// eps * |loss| / h, so ~1e-10 at h = 1e-5) divided by the 1e-4 tolerance.
double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5});
}

}  // namespace

TEST_CASE("parameter count is a function of the shape") {
  const StudentShape s = tiny_shape(16, 8, 64, 128, 8);
  const std::size_t din = 16 + 32, dm = 64, dff = 128, k = 8;
  const std::size_t expected = dm * din + dm + 2 * dm + 4 * (dm * dm + dm) + 2 * dm +
                               dff * dm + dff + dm * dff + dm + k * dm + k;
  CHECK(parameter_count(s) == expected);
  CHECK(StudentParameters::initialize(s, 1).size() == expected);
  CHECK(ParameterLayout::of(s).total == expected);
}

TEST_CASE("initialization") {
  const StudentShape s = tiny_shape(4, 2, 8, 16, 3);
  const StudentParameters a = StudentParameters::initialize(s, 5);
  const StudentParameters b = StudentParameters::initialize(s, 5);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  const auto& l = a.layout();
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(a.values()[l.ln1_gain + i] == 1.0);
    CHECK(a.values()[l.ln1_bias + i] == 0.0);
    CHECK(a.values()[l.b_in + i] == 0.0);
  }
  const double bound = std::sqrt(6.0 / (8.0 + 12.0));
  for (std::size_t i = 0; i < 8 * 12; ++i) CHECK(std::abs(a.values()[l.w_in + i]) <= bound);
  CHECK(a.all_finite());
}

TEST_CASE("positional encoding examples") {
  PositionalEncodingConfig cfg;
  cfg.n_frequencies = 3;
  SUBCASE("zero offset") {
    const std::vector<RelCoord> rc{{0.0, 0.0}};
    const auto e = encode_positions(rc, cfg, 25.0);
    REQUIRE(e.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) CHECK(e[i] == (i % 2 == 0 ? 0.0 : 1.0));
  }
  SUBCASE("full period at one radius") {
    PositionalEncodingConfig one;
    one.n_frequencies = 1;
    const std::vector<RelCoord> rc{{25.0, 0.0}};
    const auto e = encode_positions(rc, one, 25.0);
    CHECK(std::abs(e[0]) < 1e-12);
    CHECK(e[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("geometric frequency ladder") {
    const double r = 10.0, dx = 1.3, dy = -2.1;
    const std::vector<RelCoord> rc{{dx, dy}};
    cfg.base_wavelength_fraction = 0.5;
    const auto e = encode_positions(rc, cfg, r);
    for (std::size_t f = 0; f < 3; ++f) {
      const double w = 2.0 * std::numbers::pi * std::pow(2.0, static_cast<double>(f)) / 0.5;
      CHECK(e[4 * f + 0] == doctest::Approx(std::sin(w * dx / r)));
      CHECK(e[4 * f + 1] == doctest::Approx(std::cos(w * dx / r)));
      CHECK(e[4 * f + 2] == doctest::Approx(std::sin(w * dy / r)));
      CHECK(e[4 * f + 3] == doctest::Approx(std::cos(w * dy / r)));
    }
  }
  SUBCASE("invariant to a common rescaling of offsets and radius") {
    const std::vector<RelCoord> a{{1.0, 2.0}, {-3.0, 0.5}};
    const std::vector<RelCoord> b{{4.0, 8.0}, {-12.0, 2.0}};
    const auto ea = encode_positions(a, cfg, 5.0);
    const auto eb = encode_positions(b, cfg, 20.0);
    for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i] == doctest::Approx(eb[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward matches the naive oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const StudentShape s = tiny_shape(3, 1, 8, 12, 4);
    const StudentParameters p = random_params(s, rng);
    const std::size_t n = trial == 0 ? 3 : 1 + rng.below(8);
    const auto tokens = random_tokens(s, n, rng);
    const auto got = forward(p, tokens, n);
    const auto want = oracle::student_forward_naive(p, tokens, n);
    REQUIRE(got.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-10);
  }
  SUBCASE("default width") {
    const StudentShape s = tiny_shape(16, 8, 64, 128, 8);
    const StudentParameters p = StudentParameters::initialize(s, 3);
    const auto tokens = random_tokens(s, 20, rng);
    const auto got = forward(p, tokens, 20);
    const auto want = oracle::student_forward_naive(p, tokens, 20);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-10);
  }
}

TEST_CASE("single token neighborhood") {
  Rng rng(4);
  const StudentShape s = tiny_shape(3, 2, 8, 8, 5);
  const StudentParameters p = random_params(s, rng);
  const auto tokens = random_tokens(s, 1, rng);
  ForwardTrace trace;
  const auto logits = forward(p, tokens, 1, &trace);
  CHECK(trace.attn.size() == 1);
  CHECK(trace.attn[0] == 1.0);
  for (double v : logits) CHECK(std::isfinite(v));
}

TEST_CASE("logits do not depend on the order of non-center tokens") {
  Rng rng(8);
  const StudentShape s = tiny_shape(4, 2, 16, 24, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const StudentParameters p = random_params(s, rng);
    const std::size_t n = 2 + rng.below(12);
    auto tokens = random_tokens(s, n, rng);
    const auto base = forward(p, tokens, n);
    std::vector<std::size_t> order(n - 1);
    for (std::size_t i = 0; i < n - 1; ++i) order[i] = i + 1;
    rng.shuffle(order);
    std::vector<double> permuted(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(s.token_dim()));
    for (std::size_t j : order) {
      permuted.insert(permuted.end(), tokens.begin() + static_cast<std::ptrdiff_t>(j * s.token_dim()),
                      tokens.begin() + static_cast<std::ptrdiff_t>((j + 1) * s.token_dim()));
    }
    const auto again = forward(p, permuted, n);
    for (std::size_t k = 0; k < base.size(); ++k) CHECK(std::abs(base[k] - again[k]) <= 1e-12);
  }
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(2024);
  std::size_t configs = 0;
  for (std::size_t n_tokens : {1, 2, 3, 4, 5, 7, 9, 10, 13, 16}) {
    for (int rep = 0; rep < 2; ++rep) {
      const StudentShape s = tiny_shape(1 + rng.below(4), 1 + rng.below(2), 4 + 2 * rng.below(3),
                                        4 + rng.below(6), 2 + rng.below(4));
      StudentParameters p = random_params(s, rng);
      const auto tokens = random_tokens(s, n_tokens, rng);
      std::vector<double> teacher(s.n_niches);
      for (double& v : teacher) v = 2.0 * rng.normal();
      const double tau = rep == 0 ? 2.0 : 1.0;

      ForwardTrace trace;
      const auto logits = forward(p, tokens, n_tokens, &trace);
      const DistillLoss dl = distill_loss(teacher, logits, tau);
      p.zero_grads();
      backward(p, trace, dl.grad);
      const std::vector<double> analytic(p.grads().begin(), p.grads().end());

      StudentParameters probe = p;
      const auto loss_at = [&](std::span<const double> values) {
        std::copy(values.begin(), values.end(), probe.values().begin());
        return distill_loss(teacher, forward(probe, tokens, n_tokens), tau).loss;
      };
      const std::vector<double> values(p.values().begin(), p.values().end());
      const auto numeric = oracle::finite_difference(loss_at, values, 1e-5);

      double worst = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
      INFO("tokens " << n_tokens << " d_model " << s.d_model << " params " << values.size());
      CHECK(worst < 1e-4);
      ++configs;
    }
  }
  CHECK(configs >= 20);
}

TEST_CASE("gradient at the default width on a parameter sample") {
  Rng rng(77);
  const StudentShape s = tiny_shape(16, 8, 64, 128, 8);
  StudentParameters p = StudentParameters::initialize(s, 9);
  for (double& v : p.values()) v += 0.05 * rng.normal();
  const auto tokens = random_tokens(s, 12, rng);
  std::vector<double> teacher(8);
  for (double& v : teacher) v = rng.normal();
  ForwardTrace trace;
  const DistillLoss dl = distill_loss(teacher, forward(p, tokens, 12, &trace), 2.0);
  p.zero_grads();
  backward(p, trace, dl.grad);

  StudentParameters probe = p;
  for (int t = 0; t < 300; ++t) {
    const std::size_t i = rng.below(p.size());
    const double keep = probe.values()[i];
    probe.values()[i] = keep + 1e-5;
    const double up = distill_loss(teacher, forward(probe, tokens, 12), 2.0).loss;
    probe.values()[i] = keep - 1e-5;
    const double down = distill_loss(teacher, forward(probe, tokens, 12), 2.0).loss;
    probe.values()[i] = keep;
    CHECK(relative_error(p.grads()[i], (up - down) / 2e-5) < 1e-4);
  }
}

TEST_CASE("backward accumulation") {
  Rng rng(12);
  const StudentShape s = tiny_shape(3, 2, 8, 10, 4);
  StudentParameters p = random_params(s, rng);
  const auto tokens = random_tokens(s, 5, rng);
  const std::vector<double> dlogits{0.3, -0.2, 0.5, -0.6};

  SUBCASE("zero upstream gradient gives zero gradients") {
    ForwardTrace trace;
    forward(p, tokens, 5, &trace);
    p.zero_grads();
    backward(p, trace, std::vector<double>(4, 0.0));
    for (double g : p.grads()) CHECK(g == 0.0);
  }
  SUBCASE("two identical samples double the gradient") {
    ForwardTrace t1, t2;
    forward(p, tokens, 5, &t1);
    forward(p, tokens, 5, &t2);
    p.zero_grads();
    backward(p, t1, dlogits);
    const std::vector<double> once(p.grads().begin(), p.grads().end());
    backward(p, t2, dlogits);
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(std::abs(p.grads()[i] - 2.0 * once[i]) <= 1e-14 * std::max(1.0, std::abs(once[i])));
    }
  }
  SUBCASE("external buffer matches the parameter buffer") {
    ForwardTrace t1, t2;
    forward(p, tokens, 5, &t1);
    forward(p, tokens, 5, &t2);
    p.zero_grads();
    backward(p, t1, dlogits);
    std::vector<double> ext(p.size(), 0.0);
    backward(static_cast<const StudentParameters&>(p), t2, dlogits, ext);
    for (std::size_t i = 0; i < ext.size(); ++i) CHECK(ext[i] == p.grads()[i]);
  }
  SUBCASE("a trace is consumed by backward") {
    ForwardTrace trace;
    forward(p, tokens, 5, &trace);
    backward(p, trace, dlogits);
    CHECK(testutil::error_code_of([&] { backward(p, trace, dlogits); }) == ErrorCode::kState);
  }
  SUBCASE("wrong gradient length") {
    ForwardTrace trace;
    forward(p, tokens, 5, &trace);
    CHECK_THROWS_AS(backward(p, trace, std::vector<double>(3, 0.0)), Error);
  }
}

TEST_CASE("gelu") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707));
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    CHECK(gelu_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("token shape is checked") {
  const StudentShape s = tiny_shape(3, 1, 4, 4, 2);
  const StudentParameters p(s);
  CHECK_THROWS_AS(forward(p, std::vector<double>(5, 0.0), 1), Error);
  CHECK_THROWS_AS(forward(p, std::vector<double>{}, 0), Error);
}
