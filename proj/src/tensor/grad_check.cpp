#include "pqc/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "pqc/ops.hpp"

namespace pqc {

double grad_check(const std::function<Var<double>()>& loss,
                  const std::vector<Var<double>>& params, double eps) {
  if (!(eps > 0.0)) throw DomainError("grad_check step must be positive");
  for (auto p : params) p.zero_grad();

  reset_kink_count();
  Var<double> base = loss();
  if (!base || base.size() != 1) {
    throw NonScalarLoss("grad_check needs a scalar-valued function");
  }
  if (kink_count() != 0) {
    throw NonCheckablePoint(std::to_string(kink_count()) +
                            " non-differentiable point(s) at the base point");
  }
  backward(base);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.size(), 0.0);  // unreachable from the loss
    }
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<double> p = params[i];
    auto& values = p.mutable_value().storage();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + eps;
      const double up = loss().value()[0];
      values[j] = orig - eps;
      const double down = loss().value()[0];
      values[j] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[i][j] - numeric) /
                         std::max(std::abs(numeric), 1e-6);
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace pqc
