#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "fieldgen/errors.hpp"
#include "fieldgen/gradcheck.hpp"
#include "fieldgen/ops.hpp"
#include "fieldgen/optim.hpp"
#include "fieldgen/rng.hpp"
#include "support/gradient_suite.hpp"

using namespace fieldgen;

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return Tensor<T>::from(shape, std::move(v));
}

// Independent oracles, written without the kernels under test.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
  return c;
}

std::vector<double> direct_conv(const std::vector<double>& x, const std::vector<double>& w, std::size_t cin,
                                std::size_t h, std::size_t wd, std::size_t cout, std::size_t k, std::size_t stride,
                                std::size_t pad, std::size_t& ho, std::size_t& wo) {
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(cout * ho * wo, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              acc += x[(ci * h + iy) * wd + ix] * w[((co * cin + ci) * k + ky) * k + kx];
            }
        out[(co * ho + oy) * wo + ox] = acc;
      }
  return out;
}

std::vector<double> to_vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul hand cases and triple-loop oracle") {
  const auto a = TensorF::from({2, 2}, {1, 2, 3, 4});
  const auto ident = TensorF::from({2, 2}, {1, 0, 0, 1});
  const auto ai = ops::matmul(a, ident);
  for (std::size_t i = 0; i < 4; ++i) CHECK(ai[i] == a[i]);

  const auto col = ops::matmul(a, TensorF::from({2, 1}, {1, 1}));
  CHECK(col.shape() == Shape{2, 1});
  CHECK(col[0] == 3.0f);
  CHECK(col[1] == 7.0f);

  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_tensor<double>({5, 4}, rng);
    const auto y = random_tensor<double>({4, 3}, rng);
    const auto expect = naive_matmul(to_vec(x), to_vec(y), 5, 4, 3);
    const auto got = ops::matmul(x, y);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ops::matmul(a, TensorF::from({3, 1}, {1, 1, 1})), DimensionError);
}

TEST_CASE("conv2d identity, constant and direct-summation oracle") {
  Rng rng(11);
  const auto x = random_tensor<float>({1, 6, 6}, rng);
  const auto one = TensorF::from({1, 1, 1, 1}, {1.0f});
  const auto same = ops::conv2d(x, one, nullptr, 1, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);

  const auto c = TensorF::full({1, 5, 5}, 0.7f);
  const auto ones = TensorF::full({1, 1, 3, 3}, 1.0f);
  const auto box = ops::conv2d(c, ones, nullptr, 1, 0);
  CHECK(box.shape() == Shape{1, 3, 3});
  for (float v : box.data()) CHECK(v == doctest::Approx(9 * 0.7f));

  struct Case {
    std::size_t side, stride, pad;
  };
  for (const Case c : {Case{8, 1, 1}, Case{8, 1, 0}, Case{9, 2, 1}}) {
    const auto xi = random_tensor<double>({2, c.side, c.side}, rng);
    const auto k = random_tensor<double>({4, 2, 3, 3}, rng);
    std::size_t ho = 0, wo = 0;
    const auto expect = direct_conv(to_vec(xi), to_vec(k), 2, c.side, c.side, 4, 3, c.stride, c.pad, ho, wo);
    const auto got = ops::conv2d(xi, k, nullptr, c.stride, c.pad);
    REQUIRE(got.shape() == Shape{4, ho, wo});
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(got[i] - expect[i]) <= 1e-5);
  }
  // (7 + 0 - 3) / 2 is integral, (8 - 3) / 2 is not
  CHECK_NOTHROW(ops::conv2d(TensorF::zeros({1, 7, 7}), ones, nullptr, 2, 0));
  CHECK_THROWS_AS(ops::conv2d(TensorF::zeros({1, 8, 8}), ones, nullptr, 2, 0), DimensionError);
  CHECK_THROWS_AS(ops::conv2d(TensorF::zeros({1, 8, 8}), TensorF::zeros({1, 1, 2, 2}), nullptr, 1, 0),
                  DimensionError);
}

TEST_CASE("softmax rows") {
  const auto flat = ops::softmax_lastdim(TensorF::full({1, 4}, 3.0f));
  for (float v : flat.data()) CHECK(v == doctest::Approx(0.25f));

  const auto big = ops::softmax_lastdim(TensorF::from({1, 2}, {1000.0f, 0.0f}));
  CHECK(big[0] == doctest::Approx(1.0f));
  CHECK(big[1] == doctest::Approx(0.0f));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor<double>({3, 7}, rng, 3.0);
    const auto y = ops::softmax_lastdim(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) total += std::exp(x[r * 7 + j]);
      double row = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(std::abs(y[r * 7 + j] - std::exp(x[r * 7 + j]) / total) <= 1e-6);
        row += y[r * 7 + j];
      }
      CHECK(std::abs(row - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("masked softmax rows still sum to one") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor<float>({4, 6}, rng, 5.0);
    std::vector<float> m(24, 0.0f);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 6; ++j)
        if (j != r && rng.uniform() < 0.6) m[r * 6 + j] = static_cast<float>(ops::kMaskedLogit);
    const auto mask = TensorF::from({4, 6}, m);
    const auto y = ops::softmax_lastdim(x, &mask);
    for (std::size_t r = 0; r < 4; ++r) {
      double row = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        row += y[r * 6 + j];
        if (m[r * 6 + j] != 0.0f) CHECK(y[r * 6 + j] == 0.0f);
      }
      CHECK(std::abs(row - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("layer_norm") {
  const auto g = TensorF::full({4}, 1.0f), b = TensorF::zeros({4});
  const auto flat = ops::layer_norm(TensorF::full({1, 4}, 2.5f), g, b);
  for (float v : flat.data()) CHECK(v == 0.0f);

  const auto pm = ops::layer_norm(TensorF::from({1, 2}, {-1.0f, 1.0f}), TensorF::full({2}, 1.0f), TensorF::zeros({2}));
  CHECK(pm[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(pm[1] == doctest::Approx(1.0).epsilon(1e-4));

  Rng rng(9);
  const auto x = random_tensor<double>({3, 8}, rng, 2.0);
  const auto gamma = random_tensor<double>({8}, rng);
  const auto beta = random_tensor<double>({8}, rng);
  const auto y = ops::layer_norm(x, gamma, beta);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mu += x[r * 8 + j] / 8.0;
    for (std::size_t j = 0; j < 8; ++j) var += (x[r * 8 + j] - mu) * (x[r * 8 + j] - mu) / 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double expect = (x[r * 8 + j] - mu) / std::sqrt(var + 1e-5) * gamma[j] + beta[j];
      CHECK(std::abs(y[r * 8 + j] - expect) <= 1e-5);
    }
  }
  CHECK_THROWS_AS(ops::layer_norm(x, TensorD::zeros({3}), beta), DimensionError);
}

TEST_CASE("grad_check on analytic and composite functions") {
  Rng rng(21);
  auto x = random_tensor<double>({5}, rng);
  const auto sq = grad_check([&] { return ops::sum(ops::square(x)); }, {x});
  CHECK(sq.max_relative_error <= 1e-8);
  // analytic 2x
  for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x[i]));

  auto a = random_tensor<double>({3, 3}, rng);
  auto b = random_tensor<double>({3, 3}, rng);
  auto w = random_tensor<double>({3, 3}, rng);
  const auto comp = grad_check(
      [&] { return ops::sum(ops::mul(ops::softmax_lastdim(ops::matmul(a, b)), w)); }, {a, b});
  CHECK(comp.max_relative_error <= 1e-4);

  auto bad = TensorD::from({1}, {std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(grad_check([&] { return ops::sum(bad); }, {bad}), NumericError);
}

TEST_CASE("every differentiable op matches finite differences") {
  for (const auto& c : suite::op_checks()) {
    INFO(c.name << " worst analytic " << c.result.worst_analytic << " numeric " << c.result.worst_numeric);
    CHECK(c.result.max_relative_error <= 1e-4);
  }
}

TEST_CASE("non-finite results raise instead of propagating") {
  const auto big = TensorF::full({2}, 100.0f);
  CHECK_THROWS_AS(ops::exp(big), NumericError);
  CHECK_THROWS_AS(ops::softmax_lastdim(TensorF::from({1, 1}, {std::numeric_limits<float>::infinity()})),
                  NumericError);
  CHECK_THROWS_AS(ops::sqrt(TensorF::full({1}, -1.0f)), NumericError);
}

TEST_CASE("no-grad mode records no graph") {
  auto p = TensorF::full({2}, 1.0f);
  p.set_requires_grad(true);
  NoGradGuard guard;
  const auto y = ops::scale(p, 2.0f);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adamw step") {
  SUBCASE("zero learning rate leaves parameters unchanged") {
    Rng rng(1);
    auto p = random_tensor<float>({3, 3}, rng);
    p.set_requires_grad(true);
    ops::sum(ops::square(p)).backward();
    std::vector<float> before(p.data().begin(), p.data().end());
    std::vector<TensorF> params{p};
    AdamWConfig cfg;
    cfg.learning_rate = 0.0;
    auto state = OptimizerState<float>::for_params(params, cfg);
    adamw_step(params, state);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(p[i] == before[i]);
    CHECK(state.step == 1);
  }
  SUBCASE("zero gradient applies pure decay") {
    auto p = TensorD::from({2}, {2.0, -3.0});
    p.set_requires_grad(true);
    std::vector<TensorD> params{p};
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    auto state = OptimizerState<double>::for_params(params, cfg);
    adamw_step(params, state);
    CHECK(p[0] == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-3.0 * (1 - 0.05)).epsilon(1e-14));
  }
  SUBCASE("scalar step matches the update formula") {
    auto p = TensorD::from({1}, {1.0});
    p.set_requires_grad(true);
    p.mutable_grad()[0] = 1.0;
    std::vector<TensorD> params{p};
    AdamWConfig cfg;
    auto state = OptimizerState<double>::for_params(params, cfg);
    adamw_step(params, state);
    // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
    const double lr = 1e-5, wd = 0.01;
    const double expect = 1.0 * (1 - lr * wd) - lr * 1.0 / (1.0 + 1e-8);
    CHECK(std::abs(p[0] - expect) <= 1e-10);
    CHECK(std::abs(state.first_moment[0][0] - 0.1) <= 1e-15);
    CHECK(std::abs(state.second_moment[0][0] - 0.001) <= 1e-15);
  }
  SUBCASE("NaN gradient aborts the step") {
    auto p = TensorF::from({2}, {1.0f, 2.0f});
    p.set_requires_grad(true);
    p.mutable_grad()[1] = std::numeric_limits<float>::quiet_NaN();
    std::vector<TensorF> params{p};
    auto state = OptimizerState<float>::for_params(params, AdamWConfig{});
    CHECK_THROWS_AS(adamw_step(params, state), NumericError);
    CHECK(p[0] == 1.0f);
    CHECK(state.step == 0);
  }
}
