#include "fieldgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fieldgen/errors.hpp"

namespace fieldgen {

namespace {

double evaluate(const std::function<TensorD()>& f) {
  NoGradGuard no_grad;
  const double v = f().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<TensorD()>& f, std::vector<TensorD> params,
                           GradCheckOptions options) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const TensorD out = f();
  if (!std::isfinite(out.item())) throw NumericError("grad_check: function value is not finite");
  out.backward();
  const double floor = options.floor * std::max(1.0, std::abs(out.item()));

  GradCheckResult result;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + options.eps;
      const double up = evaluate(f);
      data[i] = saved - options.eps;
      const double down = evaluate(f);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
      const double rel = std::abs(numeric - analytic[i]) / denom;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace fieldgen
