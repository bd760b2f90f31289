#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "compnet/tape.hpp"

namespace compnet::nn {

using ad::Shape;
using ad::Tensor;
using ad::Var;

inline constexpr double kDefaultLeakySlope = 0.01;

/// Convolution parameters bound to a tape: kernels [F,C,kh,kw], bias [F].
struct ConvParams {
  Var kernels;
  Var bias;
};

/// Fully connected parameters bound to a tape: weights [p,q], bias [q].
struct DenseParams {
  Var weights;
  Var bias;
};

/// Dimensions of the weight-matrix fusion: `classes` rows of `n_features`
/// weights, carved out of a learned vector of length classes * n_features.
class FusionShape {
 public:
  FusionShape(std::size_t classes, std::size_t n_features);

  std::size_t classes() const noexcept { return classes_; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t learned_width() const noexcept { return classes_ * n_features_; }

 private:
  std::size_t classes_;
  std::size_t n_features_;
};

/// Valid (unpadded) stride-1 cross-correlation plus per-filter bias.
/// [B,C,H,W] -> [B,F,H-kh+1,W-kw+1].
Var conv2d(const Var& input, const ConvParams& params);

/// 2x2 max pooling with stride 2. Odd spatial sizes are rejected. The gradient
/// of each window goes to its first maximal element in row-major order.
Var maxpool2d(const Var& input);

/// input [B,p] * weights [p,q] + bias, row by row.
Var dense(const Var& input, const DenseParams& params);

/// x for x >= 0, slope * x otherwise. The derivative at 0 is 1.
Var leaky_relu(const Var& x, double slope = kDefaultLeakySlope);

/// Class scores from a learned vector and designed features. Each row of
/// `learned` [B,classes*N] is read row-major as a classes x N weight matrix
/// (row k holds the weights of class k), and score k is that row dotted with
/// the sample's designed features [B,N].
Var fusion_weight_matrix(const Var& learned, const FusionShape& shape, const Var& features);

/// Row-wise softmax of [B,classes] logits with max subtraction.
Var softmax(const Var& logits);

/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(const Var& logits, std::span<const std::size_t> labels);

/// [B,p] ++ [B,q] -> [B,p+q].
Var concat_columns(const Var& left, const Var& right);

/// Flattens everything after the batch axis.
Var flatten(const Var& input);

// Tape-free helpers used by evaluation code.
Tensor softmax(const Tensor& logits);
std::vector<double> per_sample_cross_entropy(const Tensor& logits,
                                             std::span<const std::size_t> labels);
/// Row-wise argmax; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace compnet::nn
