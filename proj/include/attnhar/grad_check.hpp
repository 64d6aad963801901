#pragma once

#include <cstddef>
#include <functional>

#include "attnhar/matrix.hpp"

namespace attnhar {

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
};

// |a - n| / max(|a|, |n|, 1e-8); the floor guards near-zero gradients.
double relative_error(double analytic, double numeric);

// Central-difference check of analytic_grad against f around x, coordinate by
// coordinate. f must be evaluable (and finite) at x +- eps per coordinate;
// a non-finite evaluation raises NumericError. The worst coordinate is the
// one with the largest relative error.
GradCheckReport grad_check(const std::function<double(const Matrix&)>& f,
                           const Matrix& x, const Matrix& analytic_grad,
                           double eps);

}  // namespace attnhar
