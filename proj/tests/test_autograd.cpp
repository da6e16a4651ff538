#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "grad_cases.hpp"
#include "pqc/grad_check.hpp"
#include "pqc/ops.hpp"
#include "pqc/optim.hpp"
#include "pqc/rng.hpp"

using namespace pqc;

using testing::check_primitive;
using testing::D;
using testing::project;
using testing::rpar;

TEST_CASE("backward of sum gives ones; of x*x gives 2x") {
  auto x = Var<float>::parameter(Tensor<float>({3}, {1, -2, 3}));
  backward(sum(x));
  CHECK(std::vector<float>(x.grad().begin(), x.grad().end()) == std::vector<float>{1, 1, 1});
  x.zero_grad();
  backward(sum(mul(x, x)));
  CHECK(std::vector<float>(x.grad().begin(), x.grad().end()) == std::vector<float>{2, -4, 6});
}

TEST_CASE("fan-out accumulates contributions") {
  auto x = Var<double>::parameter(Tensor<double>({2}, {1.5, -0.5}));
  auto y = add(scale(x, 3.0), mul(x, x));  // x used three times
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(3 + 2 * 1.5));
  CHECK(x.grad()[1] == doctest::Approx(3 + 2 * -0.5));
  // a second backward accumulates
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(2 * (3 + 2 * 1.5)));
}

TEST_CASE("tape is topologically ordered with each node once") {
  auto x = D::parameter(Tensor<double>({2}, {1, 2}));
  auto a = relu(x);
  auto b = mul(a, a);
  auto c = add(b, a);
  auto loss = sum(c);
  auto tape = Tape<double>::record(loss);
  const auto& nodes = tape.nodes();
  CHECK(nodes.size() == 5);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& p : nodes[i]->parents) {
      if (!p->requires_grad) continue;
      auto pos = std::find(nodes.begin(), nodes.end(), p.get());
      REQUIRE(pos != nodes.end());
      CHECK(pos - nodes.begin() < static_cast<long>(i));
    }
  }
  CHECK(nodes.back() == loss.node().get());
}

TEST_CASE("backward rejects non-scalar losses") {
  auto x = Var<float>::parameter(Tensor<float>({2}, {1, 2}));
  CHECK_THROWS_AS(backward(x), NonScalarLoss);
}

TEST_CASE("grad_check on a linear map is exact") {
  Rng rng(1);
  auto w = rpar({3, 2}, rng);
  auto x = D::constant(testing::random_double({4, 3}, rng));
  const double err = grad_check([&] { return project(matmul(x, w), 9); }, {w});
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check on softmax then log-likelihood") {
  Rng rng(2);
  auto z = rpar({5, 4}, rng, -2, 2);
  auto f = [&] {
    auto p = softmax(z, 1);
    return scale(sum(log(slice(p, 1, 1, 2))), -1.0);
  };
  CHECK(grad_check(f, {z}) < 1e-4);
}

TEST_CASE("grad_check rejects kinks and non-scalar outputs") {
  auto x = D::parameter(Tensor<double>({3}, {1.0, 0.0, -1.0}));
  CHECK_THROWS_AS(grad_check([&] { return sum(relu(x)); }, {x}), NonCheckablePoint);
  CHECK_THROWS_AS(grad_check([&] { return relu(x); }, {x}), NonScalarLoss);
  auto t = D::parameter(Tensor<double>({1, 1, 2, 2}, {1.0, 3.0, 3.0, 0.0}));
  CHECK_THROWS_AS(grad_check([&] { return sum(maxpool2d(t, 2, 2)); }, {t}), NonCheckablePoint);
}

TEST_CASE("every differentiable primitive passes grad_check at 10 random points") {
  for (const auto& c : testing::primitive_cases()) {
    CAPTURE(c.name);
    CHECK(check_primitive(c.make, c.f) < 1e-3);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto w = Var<float>::parameter(Tensor<float>({3}, {1, 2, 3}));
    Adam<float> opt({w});
    w.mutable_grad();  // allocated, all zeros
    opt.step();
    CHECK(w.value().storage() == std::vector<float>{1, 2, 3});
  }
  SUBCASE("first step moves each coordinate by lr*g/(|g|+eps)") {
    auto w = Var<double>::parameter(Tensor<double>({3}, {0, 0, 0}));
    AdamConfig cfg;
    Adam<double> opt({w}, cfg);
    const std::vector<double> g{0.5, -2.0, 1e-3};
    auto mg = w.mutable_grad();
    std::copy(g.begin(), g.end(), mg.begin());
    opt.step();
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(w.value()[i] == doctest::Approx(-cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps)).epsilon(1e-9));
    }
    CHECK(opt.steps() == 1);
    CHECK_FALSE(w.has_grad());
  }
  SUBCASE("missing gradient is an error") {
    auto w = Var<float>::parameter(Tensor<float>({2}, {1, 2}));
    Adam<float> opt({w});
    CHECK_THROWS_AS(opt.step(), MissingGradient);
    CHECK(opt.steps() == 0);
  }
  SUBCASE("200 steps on a quadratic shrink it at least 100x") {
    Rng rng(3);
    const std::size_t n = 8;
    auto c = Var<float>::constant(Tensor<float>({n}));
    for (auto& v : c.mutable_value().storage()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    auto w = Var<float>::parameter(Tensor<float>({n}));
    auto f = [&] {
      auto d = sub(w, c);
      return sum(mul(d, d));
    };
    const float f0 = f().value()[0];
    AdamConfig cfg;
    cfg.lr = 1e-3;
    Adam<float> opt({w}, cfg);
    for (int i = 0; i < 200; ++i) {
      backward(f());
      opt.step();
    }
    const float f1 = f().value()[0];
    MESSAGE("quadratic: " << f0 << " -> " << f1);
    CHECK(f1 * 100 <= f0);
    CHECK(opt.steps() == 200);
    CHECK(opt.first_moments()[0].size() == n);
  }
}
