#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "grace/layers.hpp"
#include "grace/numerics.hpp"
#include "oracles.hpp"

using namespace grace;

TEST_CASE("softmax rows sum to one and survive large logits") {
  Matrix m = Matrix::from_rows({{1, 2, 3}, {1000, 1000, 1000}, {-1e4, 0, 1e4}});
  Matrix s = softmax_rows(m);
  for (std::size_t r = 0; r < 3; ++r) {
    double t = 0;
    for (double x : s.row(r)) t += x;
    CHECK(t == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(s(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(s(2, 2) == doctest::Approx(1.0));
  const double e = std::exp(1.0);
  CHECK(s(0, 0) == doctest::Approx(1.0 / (1 + e + e * e)));
  std::vector<double> row{0.0, std::log(3.0)};
  CHECK(log_sum_exp(row) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("attention matches the loop oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + trial, m = 2 + 2 * trial, d = 4;
    Matrix q = oracle::random_matrix(n, d, rng), k = oracle::random_matrix(m, d, rng), v = oracle::random_matrix(m, 3, rng);
    CHECK(max_abs_diff(attention(q, k, v, 0.5), oracle::dense_attention(q, k, v, 0.5)) < 1e-12);
  }
  Matrix q(2, 2), k(0, 2), v(0, 2);
  CHECK_THROWS_AS(attention(q, k, v, 1.0), ValidationError);
}

TEST_CASE("causal attention only sees the past") {
  Rng rng(6);
  Matrix q = oracle::random_matrix(5, 3, rng), k = oracle::random_matrix(5, 3, rng), v = oracle::random_matrix(5, 2, rng);
  Matrix out = attention(q, k, v, 1.0, true);
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<std::size_t> keys;
    for (std::size_t j = 0; j <= i; ++j) keys.push_back(j);
    Matrix qi(1, 3);
    for (std::size_t c = 0; c < 3; ++c) qi(0, c) = q(i, c);
    Matrix o = oracle::attention(qi, k, v, 1.0, keys);
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(o(0, c) - out(i, c)) < 1e-12);
  }
}

TEST_CASE("attention backward passes a finite-difference check") {
  Rng rng(7);
  for (bool causal : {false, true}) {
    Param q("q", 4, 3), k("k", 4, 3), v("v", 4, 2);
    q.value = oracle::random_matrix(4, 3, rng);
    k.value = oracle::random_matrix(4, 3, rng);
    v.value = oracle::random_matrix(4, 2, rng);
    Matrix w = oracle::random_matrix(4, 2, rng);
    auto loss = [&] {
      Matrix o = attention(q.value, k.value, v.value, 0.7, causal);
      double s = 0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o.values()[i] * w.values()[i];
      return s;
    };
    AttentionCache cache;
    attention(q.value, k.value, v.value, 0.7, causal, &cache);
    ParamRefs ps{&q, &k, &v};
    zero_grads(ps);
    attention_backward(q.value, k.value, v.value, 0.7, cache, w, q.grad, k.grad, v.grad);
    auto r = grad_check(loss, ps);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.entries_checked == 12 + 12 + 8);
  }
}

TEST_CASE("layer backward passes finite differences") {
  Rng rng(8);
  Matrix x = oracle::random_matrix(3, 4, rng);
  Matrix w = oracle::random_matrix(3, 4, rng);
  auto weighted = [&](const Matrix& o) {
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o.values()[i] * w.values()[i];
    return s;
  };
  SUBCASE("layernorm") {
    LayerNorm ln = make_layernorm("ln", 4);
    ln.gamma.value = oracle::random_matrix(1, 4, rng);
    ln.beta.value = oracle::random_matrix(1, 4, rng);
    ParamRefs ps;
    collect(ln, ps);
    LayerNormCache cache;
    layernorm_forward(ln, x, &cache);
    zero_grads(ps);
    layernorm_backward(ln, cache, w);
    auto r = grad_check([&] { return weighted(layernorm_forward(ln, x, nullptr)); }, ps);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("feedforward") {
    FeedForward f = make_feedforward("ff", 4, 6, 4, rng);
    ParamRefs ps;
    collect(f, ps);
    FeedForwardCache cache;
    feedforward_forward(f, x, &cache);
    zero_grads(ps);
    feedforward_backward(f, cache, w);
    auto r = grad_check([&] { return weighted(feedforward_forward(f, x, nullptr)); }, ps);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("adamw first step matches the closed form") {
  Param p("p", 1, 3);
  p.value = Matrix::from_rows({{1.0, -2.0, 0.5}});
  p.grad = Matrix::from_rows({{0.1, -0.3, 0.0}});
  ParamRefs ps{&p};
  AdamWConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.1;
  OptState opt = make_opt_state(ps, cfg);
  adamw_step(opt, ps);
  // bias-corrected m/sqrt(v) = g/|g| on step one
  auto expect = [&](double x, double g) {
    x -= 0.01 * 0.1 * x;
    if (g != 0.0) x -= 0.01 * (g / (std::abs(g) + 1e-8));
    return x;
  };
  CHECK(p.value(0, 0) == doctest::Approx(expect(1.0, 0.1)).epsilon(1e-12));
  CHECK(p.value(0, 1) == doctest::Approx(expect(-2.0, -0.3)).epsilon(1e-12));
  CHECK(p.value(0, 2) == doctest::Approx(expect(0.5, 0.0)).epsilon(1e-12));
}

TEST_CASE("grad check catches a wrong gradient") {
  Param p("p", 1, 2);
  p.value = Matrix::from_rows({{1.0, 2.0}});
  p.grad = Matrix::from_rows({{2.0, 0.0}});  // d/dx of x^2 + y^2 is (2, 4)
  auto loss = [&] { return p.value(0, 0) * p.value(0, 0) + p.value(0, 1) * p.value(0, 1); };
  auto r = grad_check(loss, {&p});
  CHECK(r.max_rel_error > 0.5);
  CHECK(r.worst_param == "p");
  CHECK(r.worst_index == 1);
  p.grad(0, 1) = 4.0;
  CHECK(grad_check(loss, {&p}).max_rel_error < 1e-8);
}

TEST_CASE("checkpoint round trip and shape mismatch") {
  Rng rng(9);
  Param a("a", 2, 3), b("b", 1, 1);
  a.value = oracle::random_matrix(2, 3, rng);
  b.value(0, 0) = 0.1 + 1e-17;
  const auto path = (std::filesystem::temp_directory_path() / "grace_ckpt_test.json").string();
  save_checkpoint(path, {&a, &b});
  Param a2("a", 2, 3), b2("b", 1, 1);
  load_checkpoint(path, {&a2, &b2});
  CHECK(a2.value == a.value);
  CHECK(b2.value == b.value);
  Param bad("a", 3, 2);
  CHECK_THROWS(load_checkpoint(path, {&bad, &b2}));
}
