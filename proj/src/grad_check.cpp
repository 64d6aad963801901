#include "attnhar/grad_check.hpp"

#include <cmath>
#include <string>

#include "attnhar/errors.hpp"

namespace attnhar {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double(const Matrix&)>& f,
                           const Matrix& x, const Matrix& analytic_grad,
                           double eps) {
  if (!(eps > 0.0)) throw ArgumentError("grad_check: eps must be positive");
  if (!x.same_shape(analytic_grad)) {
    throw ShapeError("grad_check: x " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + " vs grad " +
                     std::to_string(analytic_grad.rows()) + "x" +
                     std::to_string(analytic_grad.cols()));
  }
  GradCheckReport rep;
  Matrix probe = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double orig = probe(r, c);
      probe(r, c) = orig + eps;
      const double fp = f(probe);
      probe(r, c) = orig - eps;
      const double fm = f(probe);
      probe(r, c) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite f at coordinate (" +
                           std::to_string(r) + "," + std::to_string(c) + ")");
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = analytic_grad(r, c);
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err = relative_error(analytic, numeric);
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      if (rel_err > rep.max_rel_error) {
        rep.max_rel_error = rel_err;
        rep.worst_row = r;
        rep.worst_col = c;
      }
    }
  }
  return rep;
}

}  // namespace attnhar
