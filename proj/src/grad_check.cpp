#include "compnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "compnet/error.hpp"

namespace compnet::ad {
namespace {

double evaluate(const ScalarFn& fn, const Tensor& x) {
  Tape tape;
  const Var out = fn(tape, tape.constant(x));
  const double v = out.value().item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: function value is not finite");
  }
  return v;
}

}  // namespace

Tensor numeric_gradient(const ScalarFn& fn, const Tensor& point, double step) {
  if (!(step > 0.0)) {
    throw ConfigError("grad_check: step must be positive");
  }
  Tensor grad = Tensor::zeros(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + step;
    const double up = evaluate(fn, probe);
    probe[i] = x0 - step;
    const double down = evaluate(fn, probe);
    probe[i] = x0;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

GradCheckReport grad_check(const ScalarFn& fn, const Tensor& point, double step, double tol) {
  if (!(tol > 0.0)) {
    throw ConfigError("grad_check: tolerance must be positive");
  }
  Tape tape;
  const Var x = tape.leaf(point);
  const Var out = fn(tape, x);
  if (!std::isfinite(out.value().item())) {
    throw NumericError("grad_check: function value is not finite");
  }
  const Tensor analytic = tape.backward(out)[x];
  const Tensor numeric = numeric_gradient(fn, point, step);

  GradCheckReport report;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({1e-12, std::abs(a), std::abs(n)});
    const double rel = std::abs(a - n) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace compnet::ad
