#pragma once

#include <cstddef>
#include <functional>

#include "compnet/tape.hpp"

namespace compnet::ad {

/// Scalar-valued function of one tensor, expressed on a tape so it can be
/// differentiated. Must be deterministic.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
};

/// Compares the reverse-mode gradient of `fn` at `point` against central
/// differences (f(x+h e_i) - f(x-h e_i)) / 2h. Relative error per coordinate is
/// |a-n| / max(1e-12, |a|, |n|).
GradCheckReport grad_check(const ScalarFn& fn, const Tensor& point, double step, double tol);

/// Central-difference gradient alone, one coordinate at a time.
Tensor numeric_gradient(const ScalarFn& fn, const Tensor& point, double step);

}  // namespace compnet::ad
