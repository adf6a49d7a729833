#pragma once

#include <functional>
#include <span>
#include <vector>

#include "acr/tensor.hpp"

namespace acr {

using ScalarFunction = std::function<Tensor(const Tensor&)>;
using MultiScalarFunction = std::function<Tensor(std::span<const Tensor>)>;

/// Compares reverse-mode gradients of `f` at `x` with central differences.
/// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
/// Throws ArgumentError when f does not return a 1x1 tensor.
double gradcheck(const ScalarFunction& f, const Matrix& x, double eps = 1e-5);

/// Same check taken jointly over several inputs.
double gradcheck_multi(const MultiScalarFunction& f, std::span<const Matrix> inputs, double eps = 1e-5);

}  // namespace acr
