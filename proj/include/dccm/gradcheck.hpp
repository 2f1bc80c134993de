#pragma once

#include <functional>
#include <vector>

#include "dccm/tape.hpp"

namespace dccm {

/// Builds a scalar loss on a fresh tape from the leaf bound to the checked point.
using PointLoss = std::function<Var(Tape&, Var point)>;
/// Builds a scalar loss that reads its parameters through Tape::parameter.
using ParamLoss = std::function<Var(Tape&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Throws ContractError for eps outside (0, 1e-3] or when two evaluations at the
/// same point disagree (non-deterministic constructor).
double gradient_check(const PointLoss& build, const Tensor& point, double eps);

/// Same measure over every coordinate of the given parameter tensors. Parameter
/// values are restored before returning.
double gradient_check_params(const ParamLoss& build, const std::vector<Tensor*>& params, double eps);

}  // namespace dccm
