#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "advp/autodiff/gradcheck.hpp"
#include "advp/autodiff/tape.hpp"
#include "advp/common/random.hpp"
#include "advp/harness/suites.hpp"
#include "advp/simd/kernels.hpp"

using namespace advp;

namespace {

NArray random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  NArray a(Shape{r, c});
  for (double& v : a.values()) v = 2.0 * uniform01(rng) - 1.0;
  return a;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("relu and log_softmax on fixed inputs") {
  Tape t;
  Var r = relu(t.constant(NArray::vector({-1.0, 0.0, 2.0})));
  CHECK(r.value() == NArray::vector({0.0, 0.0, 2.0}));
  Var l = log_softmax(t.constant(NArray::matrix(1, 2, {0.0, 0.0})), 1);
  CHECK(l.value()[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(l.value()[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("matmul matches a triple loop") {
  const NArray a = NArray::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const NArray b = NArray::matrix(3, 2, {7, -8, 9, 10, -11, 12});
  std::vector<double> expect(4, 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 3; ++k) expect[i * 2 + j] += a.at(i, k) * b.at(k, j);
  Tape t;
  const NArray c = matmul(t.constant(a), t.constant(b)).value();
  CHECK(c.shape() == Shape{2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == expect[i]);
}

TEST_CASE("log_softmax rows have zero logsumexp") {
  Rng rng(11);
  NArray x = random_matrix(20, 7, rng);
  for (double& v : x.values()) v *= 50.0;
  Tape t;
  const NArray out = log_softmax(t.constant(x), 1).value();
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += std::exp(out.at(r, c));
    CHECK(std::abs(std::log(s)) < 1e-10);
  }
}

TEST_CASE("shape errors name both shapes") {
  Tape t;
  Var a = t.constant(NArray(Shape{2, 3}));
  Var b = t.constant(NArray(Shape{2, 2}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(2, 2)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("invalid inputs are rejected") {
  Tape t;
  CHECK_THROWS_AS(t.constant(NArray::vector({1.0, NAN})), NonFiniteError);
  CHECK_THROWS_AS(clip(t.constant(NArray::vector({1.0})), 1.0, 0.0), std::invalid_argument);
  Parameter p{"p", NArray::vector({1.0, 2.0})};
  Var v = t.param(p);
  CHECK_THROWS(t.backward(v));
}

TEST_CASE("d(x^2)/dx at 3 is 6") {
  Parameter x{"x", NArray::scalar(3.0)};
  Tape t;
  GradientMap g = t.backward(sum(square(t.param(x))));
  CHECK(g.at("x").item() == 6.0);
}

TEST_CASE("softmax cross-entropy gradient has the closed form") {
  Rng rng(5);
  const std::size_t batch = 4, in = 3, classes = 5;
  Parameter w{"w", random_matrix(in, classes, rng)};
  const NArray x = random_matrix(batch, in, rng);
  const std::vector<std::size_t> y = {0, 3, 4, 1};
  Tape t;
  Var lp = log_softmax(matmul(t.constant(x), t.param(w)), 1);
  const GradientMap g = t.backward(mean(gather(lp, y)));
  const NArray& gw = g.at("w");
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t c = 0; c < classes; ++c) {
      double expect = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double p = std::exp(lp.value().at(b, c));
        expect += -(((c == y[b]) ? 1.0 : 0.0) - p) * x.at(b, i);
      }
      expect *= -1.0 / static_cast<double>(batch);
      CHECK(gw.at(i, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("multiple paths accumulate") {
  Parameter x{"x", NArray::scalar(2.0)};
  Tape t;
  Var v = t.param(x);
  // x*x + 3x -> 2x + 3 = 7
  const GradientMap g = t.backward(sum(add(mul(v, v), scale(v, 3.0))));
  CHECK(g.at("x").item() == 7.0);
}

TEST_CASE("frozen parameters get exactly zero gradient but pass gradient through") {
  Rng rng(3);
  Parameter w1{"w1", random_matrix(3, 4, rng)};
  Parameter w2{"w2", random_matrix(4, 2, rng)};
  const NArray x = random_matrix(5, 3, rng);
  auto loss = [&](Tape& t, bool freeze_flag, bool freeze_use) {
    w2.trainable = !freeze_flag;
    Var h = tanh(matmul(t.constant(x), t.param(w1)));
    return mean(square(matmul(h, t.param(w2, freeze_use))));
  };
  Tape t0;
  const GradientMap ref = t0.backward(loss(t0, false, false));
  for (auto [flag, use] : {std::pair{true, false}, std::pair{false, true}}) {
    Tape t;
    const GradientMap g = t.backward(loss(t, flag, use));
    REQUIRE(g.count("w2") == 1);
    for (double v : g.at("w2").values()) CHECK(std::signbit(v) == false);
    for (double v : g.at("w2").values()) CHECK(v == 0.0);
    CHECK(bitwise_equal(g.at("w1"), ref.at("w1")));
  }
  w2.trainable = true;
}

TEST_CASE("backward is deterministic") {
  Rng rng(8);
  Parameter w{"w", random_matrix(4, 4, rng)};
  const NArray x = random_matrix(6, 4, rng);
  auto run = [&] {
    Tape t;
    Var h = tanh(matmul(t.constant(x), t.param(w)));
    return t.backward(mean(exp(log_softmax(h, 1))));
  };
  CHECK(bitwise_equal(run().at("w"), run().at("w")));
}

TEST_CASE("grad_check on a linear function is exact up to rounding") {
  Parameter x{"x", NArray::vector({0.3, -1.2, 4.0})};
  const GradCheckResult r =
      grad_check([&](Tape& t) { return sum(scale(t.param(x), 3.0)); }, {&x});
  CHECK(r.max_relative_error < 1e-9);
  CHECK(r.entries_checked == 3);
}

TEST_CASE("grad_check on a two-layer tanh MLP") {
  Rng rng(21);
  Parameter w1{"w1", random_matrix(4, 6, rng)}, b1{"b1", NArray::vector({0.1, 0, -0.2, 0.3, 0, 0})};
  Parameter w2{"w2", random_matrix(6, 3, rng)};
  const NArray x = random_matrix(5, 4, rng);
  const GradCheckResult r = grad_check(
      [&](Tape& t) {
        Var h = tanh(add(matmul(t.constant(x), t.param(w1)), t.param(b1)));
        return mean(square(matmul(h, t.param(w2))));
      },
      {&w1, &b1, &w2});
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("grad_check on the KL between two parameterized categoricals") {
  Rng rng(4);
  Parameter a{"a", random_matrix(3, 4, rng)}, b{"b", random_matrix(3, 4, rng)};
  const GradCheckResult r = grad_check(
      [&](Tape& t) {
        Var p = log_softmax(t.param(a), 1), q = log_softmax(t.param(b), 1);
        return mean(sum(mul(exp(p), sub(p, q)), 1));
      },
      {&a, &b});
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("grad_check reports the parameter behind a non-finite loss") {
  Parameter x{"x", NArray::vector({1.0, 709.78271})};  // exp overflows at x + h
  try {
    grad_check([&](Tape& t) { return sum(exp(t.param(x))); }, {&x});
    FAIL("expected GradCheckError");
  } catch (const GradCheckError& e) {
    CHECK(e.parameter() == "x");
    CHECK(e.index() == 1);
  }
}

TEST_CASE("100 random graphs including the total loss pass the gradient check") {
  const harness::GradcheckSuiteResult r = harness::run_gradcheck_suite(100, 2024);
  CHECK(r.graphs == 100);
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("vector kernels are bitwise identical to the scalar reference") {
  const simd::KernelTable& ref = simd::scalar_kernels();
  std::vector<const simd::KernelTable*> variants;
  if (auto* k = simd::avx2_kernels()) variants.push_back(k);
  if (auto* k = simd::neon_kernels()) variants.push_back(k);
  if (variants.empty()) MESSAGE("no vector variant available on this machine");
  Rng rng(99);
  auto rnd = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 4.0 * uniform01(rng) - 2.0;
    return v;
  };
  for (const simd::KernelTable* k : variants) {
    CAPTURE(simd::to_string(k->isa));
    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 17u, 64u, 131u}) {
      const auto a = rnd(n), b = rnd(n), z = rnd(n);
      std::vector<double> o1(n), o2(n);
      for (auto fn : {&simd::KernelTable::add, &simd::KernelTable::sub, &simd::KernelTable::mul}) {
        (ref.*fn)(a.data(), b.data(), o1.data(), n);
        (k->*fn)(a.data(), b.data(), o2.data(), n);
        CHECK(same_bits(o1, o2));
      }
      ref.relu(a.data(), o1.data(), n);
      k->relu(a.data(), o2.data(), n);
      CHECK(same_bits(o1, o2));
      auto y1 = z, y2 = z;
      ref.accumulate(a.data(), y1.data(), n);
      k->accumulate(a.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));
      ref.axpy(0.37, a.data(), y1.data(), n);
      k->axpy(0.37, a.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));
      ref.accumulate_mul(a.data(), b.data(), y1.data(), n);
      k->accumulate_mul(a.data(), b.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));
      ref.relu_backward(a.data(), b.data(), y1.data(), n);
      k->relu_backward(a.data(), b.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));
      ref.tanh_backward(a.data(), b.data(), y1.data(), n);
      k->tanh_backward(a.data(), b.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));

      auto p1 = a, p2 = a, m1 = b, m2 = b;
      std::vector<double> v1(n), v2(n);
      for (std::size_t i = 0; i < n; ++i) v1[i] = v2[i] = z[i] * z[i];
      const simd::AdamCoeffs c{5e-4, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
      ref.adam_update(p1.data(), m1.data(), v1.data(), z.data(), n, c);
      k->adam_update(p2.data(), m2.data(), v2.data(), z.data(), n, c);
      CHECK(same_bits(p1, p2));
      CHECK(same_bits(m1, m2));
      CHECK(same_bits(v1, v2));
    }
    for (auto [m, kk, n] : {std::tuple{1u, 1u, 1u}, {3u, 5u, 7u}, {16u, 343u, 64u}, {9u, 64u, 4u}}) {
      const auto a = rnd(m * kk), b = rnd(kk * n), at = rnd(kk * m);
      std::vector<double> c1(m * n), c2(m * n);
      ref.gemm_nn(a.data(), b.data(), c1.data(), m, kk, n);
      k->gemm_nn(a.data(), b.data(), c2.data(), m, kk, n);
      CHECK(same_bits(c1, c2));
      ref.gemm_tn(at.data(), b.data(), c1.data(), m, kk, n);
      k->gemm_tn(at.data(), b.data(), c2.data(), m, kk, n);
      CHECK(same_bits(c1, c2));
      const auto bias = rnd(n), x = rnd(m * n);
      ref.add_row_bias(x.data(), bias.data(), c1.data(), m, n);
      k->add_row_bias(x.data(), bias.data(), c2.data(), m, n);
      CHECK(same_bits(c1, c2));
      auto g1 = bias, g2 = bias;
      ref.accumulate_rows(x.data(), g1.data(), m, n);
      k->accumulate_rows(x.data(), g2.data(), m, n);
      CHECK(same_bits(g1, g2));
    }
  }
}

TEST_CASE("a forward and backward pass is identical under every kernel variant") {
  Rng rng(17);
  Parameter w1{"w1", random_matrix(9, 13, rng)}, w2{"w2", random_matrix(13, 5, rng)};
  const NArray x = random_matrix(11, 9, rng);
  auto run = [&] {
    Tape t;
    Var h = tanh(matmul(t.constant(x), t.param(w1)));
    return t.backward(mean(gather(log_softmax(matmul(relu(h), t.param(w2)), 1),
                                  {0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0})));
  };
  const simd::Isa original = simd::active().isa;
  simd::force(simd::Isa::scalar);
  const GradientMap ref = run();
  for (simd::Isa isa : {simd::Isa::avx2, simd::Isa::neon}) {
    try {
      simd::force(isa);
    } catch (const std::invalid_argument&) {
      continue;
    }
    const GradientMap g = run();
    CHECK(bitwise_equal(g.at("w1"), ref.at("w1")));
    CHECK(bitwise_equal(g.at("w2"), ref.at("w2")));
  }
  simd::force(original);
}
