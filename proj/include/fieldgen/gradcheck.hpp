#pragma once

#include <functional>
#include <vector>

#include "fieldgen/tensor.hpp"

namespace fieldgen {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Gradients at the coordinate with the largest relative error.
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominator floor, relative to max(1, |f|), so coordinates whose true
  // gradient is below the finite-difference roundoff do not dominate.
  double floor = 1e-6;
};

// Compares reverse-mode gradients of a scalar function against central finite
// differences, coordinate by coordinate, in 64-bit arithmetic. `f` must rebuild
// its graph from `params` on every call. Throws NumericError if f is not finite.
GradCheckResult grad_check(const std::function<TensorD()>& f, std::vector<TensorD> params,
                           GradCheckOptions options = {});

}  // namespace fieldgen
