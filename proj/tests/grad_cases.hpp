#pragma once

// Every differentiable primitive as a (parameter maker, scalar function) pair
// at tiny shapes, plus the random-point driver that checks them. Shared by the
// unit tests and the acceptance runner.

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include "pqc/grad_check.hpp"
#include "pqc/ops.hpp"
#include "pqc/rng.hpp"

namespace pqc::testing {

using D = Var<double>;

inline Tensor<double> random_double(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

inline D rpar(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  return D::parameter(random_double(std::move(s), rng, lo, hi));
}

// Fixed random projection to turn any tensor into a scalar with a
// non-trivial upstream gradient.
inline D project(const D& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, D::constant(random_double(y.shape(), rng))));
}

// Runs grad_check at `points` fresh random points (redrawing any point that
// lands on a kink) and returns the worst error.
inline double check_primitive(const std::function<std::vector<D>(Rng&)>& make_params,
                              const std::function<D(const std::vector<D>&)>& f,
                              int points = 10) {
  Rng rng(1234);
  double worst = 0;
  int done = 0;
  while (done < points) {
    auto params = make_params(rng);
    try {
      worst = std::max(worst, grad_check([&] { return f(params); }, params));
      ++done;
    } catch (const NonCheckablePoint&) {
    }
  }
  return worst;
}

struct PrimitiveCase {
  const char* name;
  std::function<std::vector<D>(Rng&)> make;
  std::function<D(const std::vector<D>&)> f;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using P = std::vector<D>;
  return {
    {"add", [](Rng& r) { return P{rpar({2, 3}, r), rpar({2, 3}, r)}; },
     [](const P& p) { return project(add(p[0], p[1]), 1); }},
    {"add-broadcast", [](Rng& r) { return P{rpar({2, 3}, r), rpar({1}, r)}; },
     [](const P& p) { return project(add(p[0], p[1]), 1); }},
    {"sub", [](Rng& r) { return P{rpar({2, 3}, r), rpar({1}, r)}; },
     [](const P& p) { return project(sub(p[1], p[0]), 2); }},
    {"mul", [](Rng& r) { return P{rpar({4}, r), rpar({4}, r)}; },
     [](const P& p) { return project(mul(p[0], p[1]), 3); }},
    {"relu", [](Rng& r) { return P{rpar({8}, r)}; },
     [](const P& p) { return project(relu(p[0]), 4); }},
    {"exp", [](Rng& r) { return P{rpar({5}, r)}; },
     [](const P& p) { return project(exp(p[0]), 5); }},
    {"log", [](Rng& r) { return P{rpar({5}, r, 0.2, 3)}; },
     [](const P& p) { return project(log(p[0]), 6); }},
    {"scale", [](Rng& r) { return P{rpar({5}, r)}; },
     [](const P& p) { return project(scale(p[0], -1.7), 7); }},
    {"mean", [](Rng& r) { return P{rpar({2, 5}, r)}; },
     [](const P& p) { return mul(mean(p[0]), mean(p[0])); }},
    {"mean_axis", [](Rng& r) { return P{rpar({2, 3, 4}, r)}; },
     [](const P& p) { return project(mean_axis(p[0], 1), 8); }},
    {"reshape", [](Rng& r) { return P{rpar({2, 6}, r)}; },
     [](const P& p) { return project(reshape(p[0], {3, 4}), 9); }},
    {"permute", [](Rng& r) { return P{rpar({2, 3, 4}, r)}; },
     [](const P& p) { return project(permute(p[0], {2, 0, 1}), 10); }},
    {"concat", [](Rng& r) { return P{rpar({2, 3}, r), rpar({2, 2}, r)}; },
     [](const P& p) { return project(concat<double>({p[0], p[1]}, 1), 11); }},
    {"slice", [](Rng& r) { return P{rpar({3, 5}, r)}; },
     [](const P& p) { return project(slice(p[0], 1, 1, 4), 12); }},
    {"matmul", [](Rng& r) { return P{rpar({3, 4}, r), rpar({4, 2}, r)}; },
     [](const P& p) { return project(matmul(p[0], p[1]), 13); }},
    {"batched_matmul", [](Rng& r) { return P{rpar({2, 3, 4}, r), rpar({2, 4, 2}, r)}; },
     [](const P& p) { return project(batched_matmul(p[0], p[1]), 14); }},
    {"batched_matmul-tb", [](Rng& r) { return P{rpar({2, 3, 4}, r), rpar({2, 5, 4}, r)}; },
     [](const P& p) { return project(batched_matmul(p[0], p[1], false, true), 15); }},
    {"batched_matmul-ta", [](Rng& r) { return P{rpar({2, 4, 3}, r), rpar({2, 4, 2}, r)}; },
     [](const P& p) { return project(batched_matmul(p[0], p[1], true, false), 16); }},
    {"batched_matmul-tatb", [](Rng& r) { return P{rpar({2, 4, 3}, r), rpar({2, 5, 4}, r)}; },
     [](const P& p) { return project(batched_matmul(p[0], p[1], true, true), 17); }},
    {"add_bias", [](Rng& r) { return P{rpar({3, 4}, r), rpar({4}, r)}; },
     [](const P& p) { return project(add_bias(p[0], p[1]), 18); }},
    {"linear", [](Rng& r) { return P{rpar({2, 3, 4}, r), rpar({4, 5}, r), rpar({5}, r)}; },
     [](const P& p) { return project(linear(p[0], p[1], p[2]), 19); }},
    {"softmax-last", [](Rng& r) { return P{rpar({3, 4}, r, -2, 2)}; },
     [](const P& p) { return project(softmax(p[0], 1), 20); }},
    {"softmax-inner", [](Rng& r) { return P{rpar({2, 3, 4}, r, -2, 2)}; },
     [](const P& p) { return project(softmax(p[0], 1), 21); }},
    {"attention", [](Rng& r) { return P{rpar({2, 5, 3}, r), rpar({2, 5, 3}, r), rpar({2, 5, 3}, r)}; },
     [](const P& p) { return project(attention(p[0], p[1], p[2], 0.6), 30); }},
    {"log_softmax", [](Rng& r) { return P{rpar({3, 4}, r, -2, 2)}; },
     [](const P& p) { return project(log_softmax(p[0]), 22); }},
    {"layer_norm", [](Rng& r) { return P{rpar({3, 6}, r, -2, 2), rpar({6}, r), rpar({6}, r)}; },
     [](const P& p) { return project(layer_norm(p[0], p[1], p[2]), 23); }},
    {"l2_normalize", [](Rng& r) { return P{rpar({3, 5}, r)}; },
     [](const P& p) { return project(l2_normalize(p[0]), 24); }},
    {"conv2d", [](Rng& r) { return P{rpar({2, 2, 6, 5}, r), rpar({3, 2, 3, 3}, r), rpar({3}, r)}; },
     [](const P& p) { return project(conv2d(p[0], p[1], std::optional<D>(p[2]), 1, 1), 25); }},
    {"conv2d-stride", [](Rng& r) { return P{rpar({1, 2, 7, 7}, r), rpar({2, 2, 3, 3}, r)}; },
     [](const P& p) { return project(conv2d(p[0], p[1], std::nullopt, 2, 0), 26); }},
    {"maxpool2d", [](Rng& r) { return P{rpar({2, 2, 6, 6}, r)}; },
     [](const P& p) { return project(maxpool2d(p[0], 2, 2), 27); }},
    {"replace_rows", [](Rng& r) { return P{rpar({2, 3, 4}, r), rpar({4}, r)}; },
     [](const P& p) { return project(replace_rows(p[0], {1, 0, 0, 0, 1, 1}, p[1]), 28); }},
    {"gather_rows", [](Rng& r) { return P{rpar({4, 3}, r)}; },
     [](const P& p) { return project(gather_rows(p[0], {3, 0, 3, 1}), 29); }},
  };
}

}  // namespace pqc::testing
