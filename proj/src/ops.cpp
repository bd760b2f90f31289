#include "compnet/ops.hpp"

#include "compnet/error.hpp"

namespace compnet::ad {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected rank 2, got " + to_string(t.shape()));
  }
}

// out[p,r] += a[p,q] * b[q,r], inner index ascending.
void gemm_nn(const double* a, const double* b, double* out, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    double* row = out + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      const double* brow = b + k * r;
      for (std::size_t j = 0; j < r; ++j) row[j] += aik * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  Tensor out = Tensor::zeros({p, r});
  gemm_nn(a.data().data(), b.data().data(), out.mutable_data().data(), p, q, r);
  return out;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc;
}

Var reshape(const Var& t, Shape new_shape) {
  Tensor out = t.value().reshaped(std::move(new_shape));
  return t.tape().record(std::move(out), {t}, [](const Tensor& g, std::span<Tensor* const> grads) {
    if (Tensor* gt = grads[0]) {
      auto dst = gt->mutable_data();
      auto src = g.data();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  });
}

Var elementwise(BinaryOp op, const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "elementwise");
  Tensor out = Tensor::zeros(av.shape());
  auto o = out.mutable_data();
  auto x = av.data();
  auto y = bv.data();
  switch (op) {
    case BinaryOp::kAdd:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
      break;
    case BinaryOp::kSub:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
      break;
    case BinaryOp::kMul:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
      break;
  }
  return a.tape().record(std::move(out), {a, b},
                         [op, a, b](const Tensor& g, std::span<Tensor* const> grads) {
                           auto gd = g.data();
                           if (Tensor* ga = grads[0]) {
                             auto d = ga->mutable_data();
                             if (op == BinaryOp::kMul) {
                               auto y = b.value().data();
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * y[i];
                             } else {
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
                             }
                           }
                           if (Tensor* gb = grads[1]) {
                             auto d = gb->mutable_data();
                             if (op == BinaryOp::kMul) {
                               auto x = a.value().data();
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * x[i];
                             } else if (op == BinaryOp::kSub) {
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gd[i];
                             } else {
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
                             }
                           }
                         });
}

Var scale(const Var& t, double factor) {
  Tensor out = t.value();
  for (double& v : out.mutable_data()) v *= factor;
  return t.tape().record(std::move(out), {t},
                         [factor](const Tensor& g, std::span<Tensor* const> grads) {
                           if (Tensor* gt = grads[0]) {
                             auto d = gt->mutable_data();
                             auto s = g.data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
                           }
                         });
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b},
                         [a, b](const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& av = a.value();
                           const Tensor& bv = b.value();
                           const std::size_t p = av.dim(0), q = av.dim(1), r = bv.dim(1);
                           const double* gd = g.data().data();
                           if (Tensor* ga = grads[0]) {
                             // dA = G * B^T
                             double* d = ga->mutable_data().data();
                             const double* bd = bv.data().data();
                             for (std::size_t i = 0; i < p; ++i) {
                               for (std::size_t k = 0; k < q; ++k) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < r; ++j) acc += gd[i * r + j] * bd[k * r + j];
                                 d[i * q + k] += acc;
                               }
                             }
                           }
                           if (Tensor* gb = grads[1]) {
                             // dB = A^T * G
                             double* d = gb->mutable_data().data();
                             const double* ad = av.data().data();
                             for (std::size_t i = 0; i < p; ++i) {
                               for (std::size_t k = 0; k < q; ++k) {
                                 const double aik = ad[i * q + k];
                                 for (std::size_t j = 0; j < r; ++j) d[k * r + j] += aik * gd[i * r + j];
                               }
                             }
                           }
                         });
}

Var reduce_sum(const Var& t) {
  Tensor out = Tensor::scalar(sum(t.value()));
  return t.tape().record(std::move(out), {t}, [](const Tensor& g, std::span<Tensor* const> grads) {
    if (Tensor* gt = grads[0]) {
      const double s = g[0];
      for (double& v : gt->mutable_data()) v += s;
    }
  });
}

}  // namespace compnet::ad
