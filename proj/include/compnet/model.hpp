#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "compnet/dataset.hpp"
#include "compnet/layers.hpp"
#include "compnet/tape.hpp"
#include "json.hpp"

namespace compnet {

using ad::Tensor;
using ad::Var;

enum class FusionKind { kCompNet, kConcat, kImageOnly };

std::string to_string(FusionKind kind);
/// Accepts "compnet", "concat" and "image_only"; anything else is a ConfigError.
FusionKind parse_fusion_kind(const std::string& name);

struct ModelConfig {
  std::array<std::size_t, 3> image_shape{1, 30, 30};
  std::size_t n_classes = 2;
  std::size_t n_features = 64;
  std::vector<std::size_t> conv_filters{30, 30};
  std::size_t kernel_size = 3;
  std::vector<std::size_t> dense_hidden{256};
  // Width of the learned vector for compnet; must equal n_classes * n_features
  // when given.
  std::optional<std::size_t> learned_width;
  FusionKind fusion = FusionKind::kCompNet;
  double leaky_slope = nn::kDefaultLeakySlope;
  std::uint64_t seed = 0;

  /// Throws ConfigError when the geometry chain or widths are inconsistent.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Parameter {
  std::string name;
  Tensor value;
};

/// One step of the forward pipeline. Parameter-carrying steps point at their
/// entries in the parameter list.
struct LayerSpec {
  enum class Kind { kConv, kLeakyRelu, kMaxPool, kFlatten, kDense, kInjectFeatures, kFusion };
  Kind kind;
  std::size_t weight_index = 0;
  std::size_t bias_index = 0;
};

/// CompNet or one of its two baselines: a convolutional stack followed by
/// dense layers, finished by the weight-matrix fusion (compnet), by dense
/// layers over learned features concatenated with the designed features
/// (concat), or by a plain dense classifier (image_only).
class Model {
 public:
  /// Validates `config` and initialises parameters from its seed.
  explicit Model(ModelConfig config);

  /// Rebuilds a model with the given parameters; names and shapes must match
  /// what `config` produces.
  static Model from_parameters(ModelConfig config, std::vector<Parameter> parameters);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  std::size_t parameter_count() const;

  /// Records the forward pass on `params`' tape. `params` are the parameter
  /// tensors bound in parameters() order. Returns [B,n_classes] logits.
  Var forward(std::span<const Var> params, const Var& images, const Var& features) const;

  /// Records the parameters as tracked leaves on `tape`.
  std::vector<Var> bind(ad::Tape& tape) const;

  /// Inference without gradient tracking. image_only ignores `features`.
  Tensor forward(const Tensor& images, const Tensor& features) const;

  /// Argmax of the logits; ties resolve to the lowest class.
  std::vector<std::size_t> predict(const Tensor& images, const Tensor& features) const;

  /// Per-sample weight matrices [B,n_classes,n_features] as used by the fusion
  /// layer. Only valid for compnet.
  Tensor extract_weight_matrices(const Tensor& images) const;

 private:
  Model(ModelConfig config, std::vector<LayerSpec> layers, std::vector<Parameter> params);

  void check_inputs(const Tensor& images, const Tensor* features) const;
  Var run(std::span<const Var> params, const Var& images, const Var* features, bool stop_before_fusion) const;

  ModelConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<Parameter> params_;
};

/// Mean |weight| per (class, designed feature) over a dataset, plus each
/// class's features ordered by decreasing importance (ties by lower index).
struct ImportanceReport {
  std::vector<std::vector<double>> importance;    // [class][feature]
  std::vector<std::vector<std::size_t>> ranking;  // [class] -> feature indices
};

/// From stacked weight matrices [B,n_classes,n_features].
ImportanceReport importance_from_weight_matrices(const Tensor& weight_matrices);

ImportanceReport feature_importance(const Model& model, const data::Dataset& ds);

}  // namespace compnet
