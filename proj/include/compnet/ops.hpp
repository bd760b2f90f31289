#pragma once

#include "compnet/tape.hpp"

// Differentiable tensor primitives. No broadcasting: binary operands must have
// identical shapes. All reductions accumulate in flat row-major order.
namespace compnet::ad {

Var reshape(const Var& t, Shape new_shape);

enum class BinaryOp { kAdd, kSub, kMul };

Var elementwise(BinaryOp op, const Var& a, const Var& b);
inline Var add(const Var& a, const Var& b) { return elementwise(BinaryOp::kAdd, a, b); }
inline Var sub(const Var& a, const Var& b) { return elementwise(BinaryOp::kSub, a, b); }
inline Var mul(const Var& a, const Var& b) { return elementwise(BinaryOp::kMul, a, b); }

/// Multiplies every element by a constant.
Var scale(const Var& t, double factor);

/// [p,q] x [q,r] -> [p,r].
Var matmul(const Var& a, const Var& b);

/// Sum of all elements as a [1] tensor.
Var reduce_sum(const Var& t);

// Plain tensor kernels shared by the ops above and by tests.
Tensor matmul(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);

}  // namespace compnet::ad
