#pragma once

#include <functional>
#include <vector>

#include "coe/matrix.hpp"

namespace coe {

// Scalar objective over a list of parameter matrices.
using ScalarFn = std::function<double(const std::vector<Matrix>&)>;

// Central-finite-difference check of analytic gradients. For every coordinate
// of every parameter, compares the analytic gradient against
// (f(p + eps) - f(p - eps)) / (2 eps) and returns the maximum of
//     |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws NumericError if f is non-finite at any probe point.
double grad_check(const ScalarFn& f, std::vector<Matrix> params,
                  const std::vector<Matrix>& analytic_grads, double eps = 1e-5);

}  // namespace coe
