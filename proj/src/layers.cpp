#include "compnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "compnet/error.hpp"
#include "compnet/ops.hpp"

namespace compnet::nn {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     ad::to_string(t.shape()));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string(what) + ": non-finite input");
  }
}

double log_sum_exp(const double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, row[k]);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += std::exp(row[k] - mx);
  return mx + std::log(acc);
}

}  // namespace

FusionShape::FusionShape(std::size_t classes, std::size_t n_features)
    : classes_(classes), n_features_(n_features) {
  if (classes < 2) throw ConfigError("fusion needs at least 2 classes");
  if (n_features < 1) throw ConfigError("fusion needs at least 1 designed feature");
}

Var conv2d(const Var& input, const ConvParams& params) {
  const Tensor& x = input.value();
  const Tensor& k = params.kernels.value();
  const Tensor& bias = params.bias.value();
  require_rank(x, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernels");
  require_rank(bias, 1, "conv2d bias");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t filters = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != channels) {
    throw ShapeError("conv2d: kernels expect " + std::to_string(k.dim(1)) + " channels, input has " +
                     std::to_string(channels));
  }
  if (bias.dim(0) != filters) throw ShapeError("conv2d: bias length != filter count");
  if (h < kh || w < kw) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than input " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;

  Tensor out = Tensor::zeros({batch, filters, oh, ow});
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  double* od = out.mutable_data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < filters; ++f) {
      double* plane = od + (b * filters + f) * oh * ow;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = xd + (b * channels + c) * h * w;
        const double* kern = kd + ((f * channels + c) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = kern[ky * kw + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const double* srow = src + (oy + ky) * w + kx;
              double* orow = plane + oy * ow;
              for (std::size_t ox = 0; ox < ow; ++ox) orow[ox] += wv * srow[ox];
            }
          }
        }
      }
      const double bv = bias[f];
      for (std::size_t i = 0; i < oh * ow; ++i) plane[i] += bv;
    }
  }

  const Var kernels = params.kernels;
  const Var bias_var = params.bias;
  return input.tape().record(
      std::move(out), {input, kernels, bias_var},
      [input, kernels, batch, channels, h, w, filters, kh, kw, oh, ow](
          const Tensor& g, std::span<Tensor* const> grads) {
        const double* gd = g.data().data();
        const double* xd = input.value().data().data();
        const double* kd = kernels.value().data().data();
        double* dx = grads[0] ? grads[0]->mutable_data().data() : nullptr;
        double* dk = grads[1] ? grads[1]->mutable_data().data() : nullptr;
        double* db = grads[2] ? grads[2]->mutable_data().data() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t f = 0; f < filters; ++f) {
            const double* gplane = gd + (b * filters + f) * oh * ow;
            if (db != nullptr) {
              double acc = 0.0;
              for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
              db[f] += acc;
            }
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t in_off = (b * channels + c) * h * w;
              const std::size_t k_off = ((f * channels + c) * kh) * kw;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const double wv = kd[k_off + ky * kw + kx];
                  double acc = 0.0;
                  for (std::size_t oy = 0; oy < oh; ++oy) {
                    const double* grow = gplane + oy * ow;
                    const std::size_t row_off = in_off + (oy + ky) * w + kx;
                    if (dk != nullptr) {
                      const double* srow = xd + row_off;
                      for (std::size_t ox = 0; ox < ow; ++ox) acc += grow[ox] * srow[ox];
                    }
                    if (dx != nullptr) {
                      double* drow = dx + row_off;
                      for (std::size_t ox = 0; ox < ow; ++ox) drow[ox] += grow[ox] * wv;
                    }
                  }
                  if (dk != nullptr) dk[k_off + ky * kw + kx] += acc;
                }
              }
            }
          }
        }
      });
}

Var maxpool2d(const Var& input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "maxpool2d");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2d: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not even");
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out = Tensor::zeros({batch, channels, oh, ow});
  auto winners = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* xd = x.data().data();
  double* od = out.mutable_data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < batch * channels; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        const std::size_t top = base + 2 * oy * w + 2 * ox;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (xd[window[i]] > xd[best]) best = window[i];
        }
        od[o] = xd[best];
        (*winners)[o] = best;
      }
    }
  }
  return input.tape().record(std::move(out), {input},
                             [winners](const Tensor& g, std::span<Tensor* const> grads) {
                               if (Tensor* gx = grads[0]) {
                                 double* d = gx->mutable_data().data();
                                 for (std::size_t i = 0; i < winners->size(); ++i) {
                                   d[(*winners)[i]] += g[i];
                                 }
                               }
                             });
}

Var dense(const Var& input, const DenseParams& params) {
  const Tensor& x = input.value();
  const Tensor& wt = params.weights.value();
  const Tensor& bias = params.bias.value();
  require_rank(x, 2, "dense input");
  require_rank(wt, 2, "dense weights");
  require_rank(bias, 1, "dense bias");
  if (x.dim(1) != wt.dim(0)) {
    throw ShapeError("dense: input width " + std::to_string(x.dim(1)) + " != weight rows " +
                     std::to_string(wt.dim(0)));
  }
  if (bias.dim(0) != wt.dim(1)) throw ShapeError("dense: bias length != weight columns");

  Tensor out = ad::matmul(x, wt);
  const std::size_t batch = x.dim(0), in = x.dim(1), width = wt.dim(1);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < width; ++j) out[b * width + j] += bias[j];
  }
  const Var weights = params.weights;
  return input.tape().record(
      std::move(out), {input, weights, params.bias},
      [input, weights, batch, in, width](const Tensor& g, std::span<Tensor* const> grads) {
        const double* gd = g.data().data();
        if (Tensor* gx = grads[0]) {
          const double* wd = weights.value().data().data();
          double* d = gx->mutable_data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < in; ++k) {
              double acc = 0.0;
              for (std::size_t j = 0; j < width; ++j) acc += gd[b * width + j] * wd[k * width + j];
              d[b * in + k] += acc;
            }
          }
        }
        if (Tensor* gw = grads[1]) {
          const double* xd = input.value().data().data();
          double* d = gw->mutable_data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < in; ++k) {
              const double xv = xd[b * in + k];
              for (std::size_t j = 0; j < width; ++j) d[k * width + j] += xv * gd[b * width + j];
            }
          }
        }
        if (Tensor* gb = grads[2]) {
          double* d = gb->mutable_data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < width; ++j) d[j] += gd[b * width + j];
          }
        }
      });
}

Var leaky_relu(const Var& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu: slope must lie in (0, 1), got " + std::to_string(slope));
  }
  Tensor out = x.value();
  for (double& v : out.mutable_data()) {
    if (v < 0.0) v *= slope;
  }
  return x.tape().record(std::move(out), {x},
                         [x, slope](const Tensor& g, std::span<Tensor* const> grads) {
                           if (Tensor* gx = grads[0]) {
                             auto d = gx->mutable_data();
                             auto xv = x.value().data();
                             for (std::size_t i = 0; i < d.size(); ++i) {
                               d[i] += xv[i] >= 0.0 ? g[i] : slope * g[i];
                             }
                           }
                         });
}

Var fusion_weight_matrix(const Var& learned, const FusionShape& shape, const Var& features) {
  const Tensor& l = learned.value();
  const Tensor& d = features.value();
  require_rank(l, 2, "fusion learned vector");
  require_rank(d, 2, "fusion designed features");
  const std::size_t classes = shape.classes(), n = shape.n_features();
  if (l.dim(1) != shape.learned_width()) {
    throw ShapeError("fusion: learned width " + std::to_string(l.dim(1)) + " != " +
                     std::to_string(classes) + "x" + std::to_string(n));
  }
  if (d.dim(1) != n) {
    throw ShapeError("fusion: designed feature width " + std::to_string(d.dim(1)) + " != " +
                     std::to_string(n));
  }
  if (d.dim(0) != l.dim(0)) throw ShapeError("fusion: batch sizes differ");
  const std::size_t batch = l.dim(0), m = shape.learned_width();

  Tensor out = Tensor::zeros({batch, classes});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* lrow = l.data().data() + b * m;
    const double* drow = d.data().data() + b * n;
    for (std::size_t k = 0; k < classes; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += lrow[k * n + j] * drow[j];
      out[b * classes + k] = acc;
    }
  }
  return learned.tape().record(
      std::move(out), {learned, features},
      [learned, features, batch, classes, n, m](const Tensor& g, std::span<Tensor* const> grads) {
        const double* ld = learned.value().data().data();
        const double* dd = features.value().data().data();
        if (Tensor* gl = grads[0]) {
          double* out = gl->mutable_data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < classes; ++k) {
              const double gk = g[b * classes + k];
              for (std::size_t j = 0; j < n; ++j) out[b * m + k * n + j] += gk * dd[b * n + j];
            }
          }
        }
        if (Tensor* gd = grads[1]) {
          double* out = gd->mutable_data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::size_t k = 0; k < classes; ++k) {
                acc += g[b * classes + k] * ld[b * m + k * n + j];
              }
              out[b * n + j] += acc;
            }
          }
        }
      });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  require_finite(logits, "softmax");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw ShapeError("softmax: needs at least 2 classes");
  Tensor out = logits;
  double* od = out.mutable_data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = od + b * classes;
    double mx = row[0];
    for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, row[k]);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      row[k] = std::exp(row[k] - mx);
      total += row[k];
    }
    for (std::size_t k = 0; k < classes; ++k) row[k] /= total;
  }
  return out;
}

Var softmax(const Var& logits) {
  Tensor probs = softmax(logits.value());
  const std::size_t batch = probs.dim(0), classes = probs.dim(1);
  auto saved = std::make_shared<Tensor>(probs);
  return logits.tape().record(
      std::move(probs), {logits},
      [saved, batch, classes](const Tensor& g, std::span<Tensor* const> grads) {
        if (Tensor* gz = grads[0]) {
          double* d = gz->mutable_data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            const double* y = saved->data().data() + b * classes;
            const double* gy = g.data().data() + b * classes;
            double dot = 0.0;
            for (std::size_t k = 0; k < classes; ++k) dot += gy[k] * y[k];
            for (std::size_t k = 0; k < classes; ++k) d[b * classes + k] += y[k] * (gy[k] - dot);
          }
        }
      });
}

std::vector<double> per_sample_cross_entropy(const Tensor& logits,
                                             std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  require_finite(logits, "cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw ShapeError("cross_entropy: needs at least 2 classes");
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  std::vector<double> losses(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(labels[b]) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    const double* row = logits.data().data() + b * classes;
    losses[b] = log_sum_exp(row, classes) - row[labels[b]];
  }
  return losses;
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  const std::vector<double> losses = per_sample_cross_entropy(logits.value(), labels);
  const std::size_t batch = losses.size(), classes = logits.value().dim(1);
  double total = 0.0;
  for (double v : losses) total += v;
  auto probs = std::make_shared<Tensor>(softmax(logits.value()));
  auto owned_labels = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
  return logits.tape().record(
      Tensor::scalar(total / static_cast<double>(batch)), {logits},
      [probs, owned_labels, batch, classes](const Tensor& g, std::span<Tensor* const> grads) {
        if (Tensor* gz = grads[0]) {
          const double s = g[0] / static_cast<double>(batch);
          double* d = gz->mutable_data().data();
          const double* p = probs->data().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < classes; ++k) {
              const double target = k == (*owned_labels)[b] ? 1.0 : 0.0;
              d[b * classes + k] += s * (p[b * classes + k] - target);
            }
          }
        }
      });
}

Var concat_columns(const Var& left, const Var& right) {
  const Tensor& a = left.value();
  const Tensor& b = right.value();
  require_rank(a, 2, "concat_columns");
  require_rank(b, 2, "concat_columns");
  if (a.dim(0) != b.dim(0)) throw ShapeError("concat_columns: batch sizes differ");
  const std::size_t batch = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out = Tensor::zeros({batch, p + q});
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy_n(a.data().data() + r * p, p, out.mutable_data().data() + r * (p + q));
    std::copy_n(b.data().data() + r * q, q, out.mutable_data().data() + r * (p + q) + p);
  }
  return left.tape().record(std::move(out), {left, right},
                            [batch, p, q](const Tensor& g, std::span<Tensor* const> grads) {
                              for (std::size_t r = 0; r < batch; ++r) {
                                const double* grow = g.data().data() + r * (p + q);
                                if (Tensor* ga = grads[0]) {
                                  double* d = ga->mutable_data().data() + r * p;
                                  for (std::size_t j = 0; j < p; ++j) d[j] += grow[j];
                                }
                                if (Tensor* gb = grads[1]) {
                                  double* d = gb->mutable_data().data() + r * q;
                                  for (std::size_t j = 0; j < q; ++j) d[j] += grow[p + j];
                                }
                              }
                            });
}

Var flatten(const Var& input) {
  const Shape& s = input.shape();
  if (s.size() < 2) throw ShapeError("flatten: needs a batch axis");
  std::size_t width = 1;
  for (std::size_t i = 1; i < s.size(); ++i) width *= s[i];
  return ad::reshape(input, {s[0], width});
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "argmax_rows");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<std::size_t> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data().data() + b * classes;
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[b] = best;
  }
  return out;
}

}  // namespace compnet::nn
