#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ncdwf/graph.hpp"
#include "ncdwf/optimizer.hpp"
#include "ncdwf/rng.hpp"
#include "ncdwf/tensor.hpp"

using namespace ncdwf;
using graph::Node;
using graph::Tape;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

// Central finite differences of a scalar-valued function of one Parameter,
// checked entry by entry against the analytic gradient.
void check_grad_fd(Parameter& p, const std::function<double()>& f, const Tensor& analytic,
                   double h = 1e-5, double rel_tol = 1e-4) {
  REQUIRE(analytic.same_shape(p.value));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double orig = p.value.data()[i];
    p.value.data()[i] = orig + h;
    const double fp = f();
    p.value.data()[i] = orig - h;
    const double fm = f();
    p.value.data()[i] = orig;
    const double want = (fp - fm) / (2.0 * h);
    const double got = analytic.data()[i];
    const double denom = std::max({1e-6, std::fabs(want), std::fabs(got)});
    CAPTURE(i);
    CHECK(std::fabs(want - got) / denom < rel_tol);
  }
}

}  // namespace

TEST_CASE("rng distributions hit their moments") {
  Rng rng(123);
  const int n = 100000;

  double s = 0.0;
  for (int i = 0; i < n; ++i) s += rng.uniform01();
  CHECK(s / n == doctest::Approx(0.5).epsilon(0.01));

  double m = 0.0, v = 0.0;
  std::vector<double> xs(n);
  for (auto& x : xs) x = rng.normal();
  for (double x : xs) m += x;
  m /= n;
  for (double x : xs) v += (x - m) * (x - m);
  v /= n;
  CHECK(m == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::fabs(m) < 0.02);
  CHECK(v == doctest::Approx(1.0).epsilon(0.02));

  // Beta(1,1) is uniform; Beta(1,100) mean is 1/101
  double b11 = 0.0, b1100 = 0.0;
  for (int i = 0; i < n; ++i) b11 += rng.beta(1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double a = rng.beta(1.0, 100.0);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    b1100 += a;
  }
  CHECK(b11 / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::fabs(b1100 / n - 1.0 / 101.0) < 0.003);

  // gamma mean == shape
  double g = 0.0;
  for (int i = 0; i < n; ++i) g += rng.gamma(2.5);
  CHECK(g / n == doctest::Approx(2.5).epsilon(0.02));
}

TEST_CASE("rng is reproducible and forks are independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.raw() == b.raw());
  Rng f1 = Rng(42).fork(1);
  Rng f2 = Rng(42).fork(2);
  Rng f1again = Rng(42).fork(1);
  CHECK(f1.raw() == f1again.raw());
  CHECK(f1.raw() != f2.raw());

  // index() stays in range and covers all values
  Rng r(7);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 1000; ++i) seen[r.index(5)]++;
  for (int c : seen) CHECK(c > 100);
}

TEST_CASE("forward op values") {
  Tape t;
  // identity affine
  Node x = t.input(Tensor::row({3.0, -1.0}));
  Node W = t.input(Tensor::from({{1.0, 0.0}, {0.0, 1.0}}));
  Node b = t.input(Tensor::row({0.0, 0.0}));
  Node y = t.affine(x, W, b);
  CHECK(t.val(y)(0, 0) == 3.0);
  CHECK(t.val(y)(0, 1) == -1.0);

  Node r = t.relu(t.input(Tensor::row({-2.0, 0.0, 5.0})));
  CHECK(t.val(r)(0, 0) == 0.0);
  CHECK(t.val(r)(0, 1) == 0.0);
  CHECK(t.val(r)(0, 2) == 5.0);

  Node sm = t.softmax_rows(t.input(Tensor::row({0.0, 0.0})));
  CHECK(t.val(sm)(0, 0) == doctest::Approx(0.5));
  CHECK(t.val(sm)(0, 1) == doctest::Approx(0.5));

  Node cat = t.concat_rows(t.input(Tensor::from({{1.0, 2.0}})),
                           t.input(Tensor::from({{3.0, 4.0}, {5.0, 6.0}})));
  CHECK(t.val(cat).rows() == 3);
  CHECK(t.val(cat)(2, 1) == 6.0);

  Node cm = t.clamp_min(t.input(Tensor::row({-5.0, 0.2})), 0.1);
  CHECK(t.val(cm)(0, 0) == 0.1);
  CHECK(t.val(cm)(0, 1) == 0.2);
}

TEST_CASE("softmax rows sum to one and stay positive at extreme logits") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    Tensor logits = random_tensor(rng, 4, 7, 300.0);
    Node p = t.softmax_rows(t.input(logits));
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = t.val(p)(i, j);
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("simple analytic gradients") {
  // d/dz of (Wz)[c] is row c of W
  {
    Tape t;
    Parameter z("z", Tensor::row({0.3, -0.7}));
    Node zn = t.param(z);
    Node W = t.input(Tensor::from({{1.0, 0.0}, {0.0, 1.0}}));
    Node b = t.input(Tensor::row({0.0, 0.0}));
    Node logits = t.affine(zn, W, b);
    Node mask = t.input(Tensor::row({1.0, 0.0}));  // pick c = 0
    Node picked = t.sum(t.mul(logits, mask));
    t.backward(picked);
    CHECK(z.grad(0, 0) == 1.0);
    CHECK(z.grad(0, 1) == 0.0);
  }
  // d/dx sum(x^2) at [1,2] is [2,4]
  {
    Tape t;
    Parameter x("x", Tensor::row({1.0, 2.0}));
    Node loss = t.sum(t.square(t.param(x)));
    t.backward(loss);
    CHECK(x.grad(0, 0) == 2.0);
    CHECK(x.grad(0, 1) == 4.0);
  }
}

TEST_CASE("gradient accumulates over multiple consumers") {
  Tape t;
  Parameter x("x", Tensor::row({2.0}));
  Node xn = t.param(x);
  Node y = t.add(t.square(xn), t.scale(xn, 3.0));  // x^2 + 3x -> 2x + 3 = 7
  t.backward(t.sum(y));
  CHECK(x.grad(0, 0) == 7.0);
}

TEST_CASE("three layer net gradients match finite differences") {
  Rng rng(20260819);
  for (int seed_trial = 0; seed_trial < 10; ++seed_trial) {
    const std::size_t B = 3, D = 5, H = 4, C = 3;
    Parameter W1("W1", random_tensor(rng, H, D));
    Parameter b1("b1", random_tensor(rng, 1, H, 0.1));
    Parameter W2("W2", random_tensor(rng, H, H));
    Parameter b2("b2", random_tensor(rng, 1, H, 0.1));
    Parameter W3("W3", random_tensor(rng, C, H));
    Parameter b3("b3", random_tensor(rng, 1, C, 0.1));
    const Tensor x = random_tensor(rng, B, D);
    Tensor onehot(B, C);
    for (std::size_t i = 0; i < B; ++i) onehot(i, rng.index(C)) = 1.0;

    // cross-entropy of a 2-hidden-layer relu net
    auto loss_value = [&]() {
      Tape t;
      Node h1 = t.relu(t.affine(t.input(x), t.param(W1), t.param(b1)));
      Node h2 = t.relu(t.affine(h1, t.param(W2), t.param(b2)));
      Node logits = t.affine(h2, t.param(W3), t.param(b3));
      Node logp = t.log(t.softmax_rows(logits));
      Node ce = t.scale(t.sum(t.mul(logp, t.input(onehot))), -1.0 / B);
      return t.scalar_value(ce);
    };

    std::vector<Parameter*> params = {&W1, &b1, &W2, &b2, &W3, &b3};
    zero_grads(params);
    {
      Tape t;
      Node h1 = t.relu(t.affine(t.input(x), t.param(W1), t.param(b1)));
      Node h2 = t.relu(t.affine(h1, t.param(W2), t.param(b2)));
      Node logits = t.affine(h2, t.param(W3), t.param(b3));
      Node logp = t.log(t.softmax_rows(logits));
      Node ce = t.scale(t.sum(t.mul(logp, t.input(onehot))), -1.0 / B);
      t.backward(ce);
    }
    for (Parameter* p : params) {
      Tensor analytic = p->grad;
      check_grad_fd(*p, loss_value, analytic);
    }
  }
}

TEST_CASE("gradients for the remaining op set match finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Parameter x("x", random_tensor(rng, 2, 3, 0.8));
    Parameter w("w", random_tensor(rng, 1, 3, 0.8));

    // exercise exp, log, sqrt, sigmoid, clamp_min, sub/mul broadcast,
    // row_sum, concat
    auto build = [&](Tape& t) {
      Node xn = t.param(x);
      Node wn = t.param(w);
      Node a = t.exp(t.scale(xn, 0.5));
      Node b = t.sigmoid(t.mul(xn, wn));              // broadcast 1x3 over 2x3
      Node c = t.sqrt(t.clamp_min(t.sub(a, b), 0.3)); // keep clear of the kink
      Node d = t.log(t.clamp_min(b, 1e-3));
      Node e = t.row_sum(t.concat_rows(c, d));        // 4x1
      return t.mean_all(t.square(e));
    };
    auto loss_value = [&]() {
      Tape t;
      return t.scalar_value(build(t));
    };
    zero_grads({&x, &w});
    {
      Tape t;
      t.backward(build(t));
    }
    Tensor gx = x.grad, gw = w.grad;
    check_grad_fd(x, loss_value, gx);
    check_grad_fd(w, loss_value, gw);
  }
}

TEST_CASE("differentiable inputs expose gradients via the tape") {
  Tape t;
  Node z = t.var(Tensor::row({1.0, -2.0}));
  Node loss = t.sum(t.square(z));
  t.backward(loss);
  CHECK(t.grad(z)(0, 0) == 2.0);
  CHECK(t.grad(z)(0, 1) == -4.0);
}

TEST_CASE("non-finite forward values are reported") {
  Tape t;
  Node x = t.input(Tensor::row({-1.0}));
  CHECK_THROWS_AS(t.sqrt(x), NumericError);  // sqrt(-1) = NaN
  Tensor inf(1, 1, 1e308);
  Node big = t.input(inf);
  CHECK_THROWS_AS(t.square(big), NumericError);
}

TEST_CASE("shape errors are reported") {
  Tape t;
  Node a = t.input(Tensor(2, 3, 1.0));
  Node b = t.input(Tensor(3, 2, 1.0));
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.affine(a, b, b), ShapeError);
  CHECK_THROWS_AS(t.grad(a), Error);  // backward has not run yet
  Node s = t.sum(a);
  CHECK_NOTHROW(t.backward(s));
  CHECK(t.grad(b)(0, 0) == 0.0);  // constant leaf, no flow into it
}

TEST_CASE("sgd momentum recurrence") {
  // lr=1, momentum=0: plain gradient step
  {
    Parameter p("p", Tensor::row({5.0}));
    p.grad(0, 0) = 2.0;
    SgdMomentum opt(1.0, 0.0);
    opt.step({&p});
    CHECK(p.value(0, 0) == 3.0);
  }
  // lr=0.1, momentum=0.9, unit gradients: v1=1, p1=-0.1; v2=1.9, p2=-0.29
  {
    Parameter p("p", Tensor::row({0.0}));
    SgdMomentum opt(0.1, 0.9);
    p.grad(0, 0) = 1.0;
    opt.step({&p});
    CHECK(p.value(0, 0) == doctest::Approx(-0.1));
    p.grad(0, 0) = 1.0;
    opt.step({&p});
    CHECK(p.value(0, 0) == doctest::Approx(-0.29));
  }
  // zero gradient and zero velocity: fixed point
  {
    Parameter p("p", Tensor::row({1.5}));
    SgdMomentum opt(0.5, 0.9);
    opt.step({&p});
    CHECK(p.value(0, 0) == 1.5);
  }
}

TEST_CASE("training determinism: same seed gives bit-identical parameters") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Parameter W("W", random_tensor(rng, 4, 4));
    Parameter b("b", Tensor(1, 4));
    SgdMomentum opt(0.05, 0.9);
    for (int step = 0; step < 25; ++step) {
      const Tensor x = random_tensor(rng, 8, 4);
      zero_grads({&W, &b});
      Tape t;
      Node out = t.affine(t.input(x), t.param(W), t.param(b));
      t.backward(t.mean_all(t.square(out)));
      opt.step({&W, &b});
    }
    return W.value;
  };
  const Tensor a = run(5), b = run(5), c = run(6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
}
