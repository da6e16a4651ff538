#pragma once

#include <functional>
#include <vector>

#include "pqc/autograd.hpp"

namespace pqc {

// Compares reverse-mode gradients against central differences in double
// precision. `loss` is re-evaluated after perturbing each coordinate of each
// parameter in place; values are restored afterwards.
//
// Returns max over coordinates of |analytic - numeric| / max(|numeric|, 1e-6).
// Throws NonScalarLoss for non-scalar output and NonCheckablePoint when the
// unperturbed evaluation meets a kink (relu input exactly 0, tied pooling max).
double grad_check(const std::function<Var<double>()>& loss,
                  const std::vector<Var<double>>& params, double eps = 1e-5);

}  // namespace pqc
