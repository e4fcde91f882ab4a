#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "lrdcast/nn/autograd.hpp"

using namespace lrdcast::nn;

namespace {

NdArray random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  NdArray m = NdArray::matrix(rows, cols);
  for (double& v : m.storage()) v = nd(rng);
  return m;
}

void check_groups(const std::vector<gradcheck::GroupError>& errors) {
  for (const auto& e : errors) {
    INFO(e.name, " analytic ", e.analytic_norm, " numeric ", e.numeric_norm, " relative ", e.relative);
    CHECK(gradcheck::passes(e));
  }
}

}  // namespace

TEST_CASE("elementary op values") {
  const Var a = constant(NdArray::from_rows({{1, 2}, {3, 4}}));
  const Var b = constant(NdArray::from_rows({{5, 6}, {7, 8}}));
  const Var m = matmul(a, b);
  CHECK(m->value(0, 0) == 19);
  CHECK(m->value(1, 1) == 50);
  CHECK(add(a, b)->value(1, 0) == 10);
  CHECK(add_row(a, constant(NdArray::from_rows({{10, 20}})))->value(1, 1) == 24);
  CHECK(scale(a, 0.5)->value(0, 1) == 1);
  CHECK(slice_rows(a, 1, 1)->value.rows() == 1);
  CHECK(slice_rows(a, 1, 1)->value(0, 0) == 3);
  CHECK(gelu(constant(NdArray::from_rows({{0.0}})))->value[0] == 0.0);
  CHECK(gelu(constant(NdArray::from_rows({{10.0}})))->value[0] == doctest::Approx(10.0));
  CHECK(mse_loss(a, NdArray::from_rows({{1, 2}, {3, 6}}))->value[0] == 1.0);
  CHECK_THROWS(add(a, constant(NdArray::matrix(3, 2))));
  CHECK_THROWS(matmul(a, constant(NdArray::matrix(3, 2))));
  CHECK_THROWS(slice_rows(a, 1, 2));
}

TEST_CASE("layer norm normalizes rows") {
  std::mt19937_64 rng(1);
  const Var x = constant(random_matrix(4, 6, rng, 3.0));
  const Var g = constant(NdArray::matrix(1, 6, 1.0));
  const Var b = constant(NdArray::matrix(1, 6, 0.0));
  const Var y = layer_norm(x, g, b);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, sq = 0.0;
    for (double v : y->value.row(r)) mean += v / 6.0;
    for (double v : y->value.row(r)) sq += (v - mean) * (v - mean) / 6.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sq - 1.0) < 1e-3);
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(2);
  const Var x = constant(NdArray::matrix(50, 40, 1.0));
  CHECK(dropout(x, 0.5, false, rng) == x);
  CHECK(dropout(x, 0.0, true, rng) == x);
  const Var y = dropout(x, 0.25, true, rng);
  std::size_t zeros = 0;
  for (double v : y->value.data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
    zeros += v == 0.0;
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
}

TEST_CASE("non-finite values are rejected") {
  NdArray bad = NdArray::matrix(1, 2);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(constant(bad), NonFiniteError);
  const Var big = constant(NdArray::from_rows({{1e200}}));
  CHECK_THROWS_AS(matmul(big, big), NonFiniteError);
}

TEST_CASE("gradients of elementary ops") {
  std::mt19937_64 rng(3);
  const Var a = parameter(random_matrix(3, 4, rng));
  const Var b = parameter(random_matrix(4, 5, rng));
  const Var bias = parameter(random_matrix(1, 5, rng));
  const Var g = parameter(random_matrix(1, 5, rng));
  const Var beta = parameter(random_matrix(1, 5, rng));
  const NdArray target = random_matrix(2, 5, rng);
  const auto loss = [&] {
    Var h = linear(a, b, bias);
    h = gelu(h);
    h = layer_norm(h, g, beta);
    h = add(h, scale(h, 0.3));
    h = slice_rows(h, 1, 2);
    return mse_loss(h, target);
  };
  check_groups(gradcheck::compare(loss, {{"a", a}, {"b", b}, {"bias", bias}, {"gamma", g}, {"beta", beta}}));
}

TEST_CASE("gradients accumulate across backward calls") {
  std::mt19937_64 rng(4);
  const Var w = parameter(random_matrix(2, 2, rng));
  const Var x = constant(random_matrix(3, 2, rng));
  const NdArray t = random_matrix(3, 2, rng);
  backward(mse_loss(matmul(x, w), t));
  const NdArray once = w->grad;
  backward(mse_loss(matmul(x, w), t));
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w->grad[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("gradients through a shared node") {
  std::mt19937_64 rng(5);
  const Var w = parameter(random_matrix(3, 3, rng));
  const NdArray t = random_matrix(3, 3, rng);
  const auto loss = [&] {
    const Var h = gelu(w);
    return mse_loss(add(matmul(h, h), h), t);
  };
  check_groups(gradcheck::compare(loss, {{"w", w}}));
}

TEST_CASE("attention block gradients") {
  std::mt19937_64 rng(6);
  const std::size_t L = 16, d = 8;
  const Var x = parameter(random_matrix(L, d, rng));
  const Var mem = parameter(random_matrix(12, d, rng));
  const Var wq = parameter(random_matrix(d, d, rng, 0.4));
  const Var wk = parameter(random_matrix(d, d, rng, 0.4));
  const Var wv = parameter(random_matrix(d, d, rng, 0.4));
  const Var bq = parameter(random_matrix(1, d, rng, 0.1));
  const NdArray target = random_matrix(L, d, rng);
  for (bool sparse : {true, false}) {
    for (bool causal : {false, true}) {
      CAPTURE(sparse);
      CAPTURE(causal);
      const AttentionSpec spec{.n_heads = 2, .causal = causal, .sparse = sparse, .factor_c = 2.0};
      const auto self = [&] {
        const Var q = linear(x, wq, bq);
        return mse_loss(multi_head_attention(q, matmul(x, wk), matmul(x, wv), spec), target);
      };
      check_groups(gradcheck::compare(self, {{"x", x}, {"wq", wq}, {"wk", wk}, {"wv", wv}, {"bq", bq}}));
    }
  }
  const AttentionSpec cross{.n_heads = 4, .causal = false, .sparse = false};
  const auto loss = [&] {
    return mse_loss(multi_head_attention(matmul(x, wq), matmul(mem, wk), matmul(mem, wv), cross), target);
  };
  check_groups(gradcheck::compare(loss, {{"x", x}, {"mem", mem}, {"wq", wq}, {"wk", wk}, {"wv", wv}}));
}

TEST_CASE("encoder layer gradients") {
  std::mt19937_64 rng(7);
  const std::size_t L = 16, d = 8, ff = 16;
  std::vector<std::pair<std::string, Var>> groups;
  const auto p = [&](const std::string& name, NdArray v) {
    groups.emplace_back(name, parameter(std::move(v)));
    return groups.back().second;
  };
  const Var x = p("x", random_matrix(L, d, rng));
  const Var wq = p("wq", random_matrix(d, d, rng, 0.4)), bq = p("bq", random_matrix(1, d, rng, 0.1));
  const Var wk = p("wk", random_matrix(d, d, rng, 0.4)), bk = p("attn.k.b", random_matrix(1, d, rng, 0.1));
  const Var wv = p("wv", random_matrix(d, d, rng, 0.4)), bv = p("bv", random_matrix(1, d, rng, 0.1));
  const Var wo = p("wo", random_matrix(d, d, rng, 0.4)), bo = p("bo", random_matrix(1, d, rng, 0.1));
  const Var g1 = p("ln1.g", random_matrix(1, d, rng)), b1 = p("ln1.b", random_matrix(1, d, rng));
  const Var w1 = p("ff1.w", random_matrix(d, ff, rng, 0.4)), c1 = p("ff1.b", random_matrix(1, ff, rng, 0.1));
  const Var w2 = p("ff2.w", random_matrix(ff, d, rng, 0.4)), c2 = p("ff2.b", random_matrix(1, d, rng, 0.1));
  const Var g2 = p("ln2.g", random_matrix(1, d, rng)), b2 = p("ln2.b", random_matrix(1, d, rng));
  const NdArray target = random_matrix(L, d, rng);
  const AttentionSpec spec{.n_heads = 2, .causal = false, .sparse = true};
  const auto loss = [&] {
    const Var a = multi_head_attention(linear(x, wq, bq), linear(x, wk, bk), linear(x, wv, bv), spec);
    const Var h = layer_norm(add(x, linear(a, wo, bo)), g1, b1);
    const Var f = linear(gelu(linear(h, w1, c1)), w2, c2);
    return mse_loss(layer_norm(add(h, f), g2, b2), target);
  };
  check_groups(gradcheck::compare(loss, groups));
}
