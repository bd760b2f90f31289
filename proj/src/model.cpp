#include "compnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "compnet/error.hpp"
#include "compnet/ops.hpp"

namespace compnet {
using nlohmann::json;

namespace {

constexpr std::size_t kInferenceChunk = 256;

struct Blueprint {
  std::vector<LayerSpec> layers;
  std::vector<std::string> names;
  std::vector<ad::Shape> shapes;
  std::vector<std::pair<std::size_t, std::size_t>> fans;  // per parameter; (0,0) marks a bias
};

Blueprint make_blueprint(const ModelConfig& cfg) {
  cfg.validate();
  Blueprint bp;
  const auto add_param = [&](std::string name, ad::Shape shape, std::size_t fan_in, std::size_t fan_out) {
    bp.names.push_back(std::move(name));
    bp.shapes.push_back(std::move(shape));
    bp.fans.emplace_back(fan_in, fan_out);
    return bp.names.size() - 1;
  };

  std::size_t channels = cfg.image_shape[0], h = cfg.image_shape[1], w = cfg.image_shape[2];
  const std::size_t k = cfg.kernel_size;
  for (std::size_t i = 0; i < cfg.conv_filters.size(); ++i) {
    const std::size_t f = cfg.conv_filters[i];
    const std::string prefix = "conv" + std::to_string(i);
    const std::size_t wi = add_param(prefix + ".kernels", {f, channels, k, k}, channels * k * k, f * k * k);
    const std::size_t bi = add_param(prefix + ".bias", {f}, 0, 0);
    bp.layers.push_back({LayerSpec::Kind::kConv, wi, bi});
    bp.layers.push_back({LayerSpec::Kind::kLeakyRelu});
    bp.layers.push_back({LayerSpec::Kind::kMaxPool});
    channels = f;
    h = (h - k + 1) / 2;
    w = (w - k + 1) / 2;
  }
  bp.layers.push_back({LayerSpec::Kind::kFlatten});
  std::size_t width = channels * h * w;
  for (std::size_t i = 0; i < cfg.dense_hidden.size(); ++i) {
    const std::size_t out = cfg.dense_hidden[i];
    const std::string prefix = "dense" + std::to_string(i);
    const std::size_t wi = add_param(prefix + ".weights", {width, out}, width, out);
    const std::size_t bi = add_param(prefix + ".bias", {out}, 0, 0);
    bp.layers.push_back({LayerSpec::Kind::kDense, wi, bi});
    bp.layers.push_back({LayerSpec::Kind::kLeakyRelu});
    width = out;
    if (cfg.fusion == FusionKind::kConcat && i == 0) {
      bp.layers.push_back({LayerSpec::Kind::kInjectFeatures});
      width += cfg.n_features;
    }
  }
  const std::size_t out_width =
      cfg.fusion == FusionKind::kCompNet ? cfg.n_classes * cfg.n_features : cfg.n_classes;
  const std::size_t wi = add_param("output.weights", {width, out_width}, width, out_width);
  const std::size_t bi = add_param("output.bias", {out_width}, 0, 0);
  bp.layers.push_back({LayerSpec::Kind::kDense, wi, bi});
  if (cfg.fusion == FusionKind::kCompNet) bp.layers.push_back({LayerSpec::Kind::kFusion});
  return bp;
}

}  // namespace

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::kCompNet:
      return "compnet";
    case FusionKind::kConcat:
      return "concat";
    case FusionKind::kImageOnly:
      return "image_only";
  }
  return "unknown";
}

FusionKind parse_fusion_kind(const std::string& name) {
  if (name == "compnet") return FusionKind::kCompNet;
  if (name == "concat") return FusionKind::kConcat;
  if (name == "image_only") return FusionKind::kImageOnly;
  throw ConfigError("unknown model kind '" + name + "' (expected compnet, concat or image_only)");
}

void ModelConfig::validate() const {
  for (std::size_t d : image_shape) {
    if (d == 0) throw ConfigError("image_shape dimensions must be positive");
  }
  if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
  if (n_features < 1) throw ConfigError("n_features must be at least 1");
  if (kernel_size < 1) throw ConfigError("kernel_size must be at least 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0, 1)");
  for (std::size_t f : conv_filters) {
    if (f < 1) throw ConfigError("conv_filters entries must be positive");
  }
  for (std::size_t d : dense_hidden) {
    if (d < 1) throw ConfigError("dense_hidden entries must be positive");
  }
  std::size_t h = image_shape[1], w = image_shape[2];
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    if (h < kernel_size || w < kernel_size) {
      throw ConfigError("conv stage " + std::to_string(i) + ": input " + std::to_string(h) + "x" +
                        std::to_string(w) + " smaller than kernel " + std::to_string(kernel_size));
    }
    h = h - kernel_size + 1;
    w = w - kernel_size + 1;
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError("conv stage " + std::to_string(i) + " leaves odd size " + std::to_string(h) + "x" +
                        std::to_string(w) + " before 2x2 pooling");
    }
    h /= 2;
    w /= 2;
  }
  if (fusion == FusionKind::kCompNet && learned_width && *learned_width != n_classes * n_features) {
    throw ConfigError("compnet learned width " + std::to_string(*learned_width) + " != n_classes x n_features = " +
                      std::to_string(n_classes * n_features));
  }
  if (fusion == FusionKind::kConcat && dense_hidden.empty()) {
    throw ConfigError("concat model needs at least one hidden dense layer to inject features after");
  }
}

json ModelConfig::to_json() const {
  json j = {
      {"image_shape", image_shape},
      {"n_classes", n_classes},
      {"n_features", n_features},
      {"conv_filters", conv_filters},
      {"kernel_size", kernel_size},
      {"dense_hidden", dense_hidden},
      {"fusion_kind", compnet::to_string(fusion)},
      {"leaky_slope", leaky_slope},
      {"seed", seed},
  };
  j["learned_width"] = learned_width ? json(*learned_width) : json(nullptr);
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    c.image_shape = j.value("image_shape", c.image_shape);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.n_features = j.value("n_features", c.n_features);
    c.conv_filters = j.value("conv_filters", c.conv_filters);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.dense_hidden = j.value("dense_hidden", c.dense_hidden);
    if (j.contains("fusion_kind")) c.fusion = parse_fusion_kind(j.at("fusion_kind").get<std::string>());
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.seed = j.value("seed", c.seed);
    if (j.contains("learned_width") && !j["learned_width"].is_null()) {
      c.learned_width = j["learned_width"].get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return c;
}

Model::Model(ModelConfig config, std::vector<LayerSpec> layers, std::vector<Parameter> params)
    : config_(std::move(config)), layers_(std::move(layers)), params_(std::move(params)) {}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  Blueprint bp = make_blueprint(config_);
  layers_ = std::move(bp.layers);
  std::mt19937_64 rng(config_.seed);
  for (std::size_t i = 0; i < bp.names.size(); ++i) {
    Tensor value = Tensor::zeros(bp.shapes[i]);
    const auto [fan_in, fan_out] = bp.fans[i];
    if (fan_in + fan_out > 0) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : value.mutable_data()) v = dist(rng);
    }
    params_.push_back(Parameter{bp.names[i], std::move(value)});
  }
}

Model Model::from_parameters(ModelConfig config, std::vector<Parameter> parameters) {
  Blueprint bp = make_blueprint(config);
  if (parameters.size() != bp.names.size()) {
    throw ShapeError("expected " + std::to_string(bp.names.size()) + " parameter tensors, got " +
                     std::to_string(parameters.size()));
  }
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    if (parameters[i].name != bp.names[i] || parameters[i].value.shape() != bp.shapes[i]) {
      throw ShapeError("parameter " + std::to_string(i) + " is " + parameters[i].name +
                       ad::to_string(parameters[i].value.shape()) + ", expected " + bp.names[i] +
                       ad::to_string(bp.shapes[i]));
    }
    if (!parameters[i].value.all_finite()) throw NumericError("parameter " + bp.names[i] + " is not finite");
  }
  return Model(std::move(config), std::move(bp.layers), std::move(parameters));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::vector<Var> Model::bind(ad::Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const Parameter& p : params_) vars.push_back(tape.leaf(p.value));
  return vars;
}

void Model::check_inputs(const Tensor& images, const Tensor* features) const {
  const auto& s = config_.image_shape;
  if (images.rank() != 4 || images.dim(1) != s[0] || images.dim(2) != s[1] || images.dim(3) != s[2]) {
    throw ShapeError("images must be [B," + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
                     std::to_string(s[2]) + "], got " + ad::to_string(images.shape()));
  }
  if (!images.all_finite()) throw DataError("images contain non-finite values");
  if (features != nullptr) {
    if (features->rank() != 2 || features->dim(0) != images.dim(0) || features->dim(1) != config_.n_features) {
      throw ShapeError("features must be [" + std::to_string(images.dim(0)) + "," +
                       std::to_string(config_.n_features) + "], got " + ad::to_string(features->shape()));
    }
    if (!features->all_finite()) throw DataError("features contain non-finite values");
  }
}

Var Model::run(std::span<const Var> params, const Var& images, const Var* features,
               bool stop_before_fusion) const {
  if (params.size() != params_.size()) throw ShapeError("parameter binding has the wrong length");
  const double slope = config_.leaky_slope;
  Var h = images;
  for (const LayerSpec& layer : layers_) {
    switch (layer.kind) {
      case LayerSpec::Kind::kConv:
        h = nn::conv2d(h, {params[layer.weight_index], params[layer.bias_index]});
        break;
      case LayerSpec::Kind::kLeakyRelu:
        h = nn::leaky_relu(h, slope);
        break;
      case LayerSpec::Kind::kMaxPool:
        h = nn::maxpool2d(h);
        break;
      case LayerSpec::Kind::kFlatten:
        h = nn::flatten(h);
        break;
      case LayerSpec::Kind::kDense:
        h = nn::dense(h, {params[layer.weight_index], params[layer.bias_index]});
        break;
      case LayerSpec::Kind::kInjectFeatures:
        h = nn::concat_columns(h, *features);
        break;
      case LayerSpec::Kind::kFusion:
        if (stop_before_fusion) return h;
        h = nn::fusion_weight_matrix(h, nn::FusionShape(config_.n_classes, config_.n_features), *features);
        break;
    }
  }
  return h;
}

Var Model::forward(std::span<const Var> params, const Var& images, const Var& features) const {
  const bool uses_features = config_.fusion != FusionKind::kImageOnly;
  check_inputs(images.value(), uses_features ? &features.value() : nullptr);
  return run(params, images, uses_features ? &features : nullptr, false);
}

Tensor Model::forward(const Tensor& images, const Tensor& features) const {
  const bool uses_features = config_.fusion != FusionKind::kImageOnly;
  check_inputs(images, uses_features ? &features : nullptr);
  const std::size_t batch = images.dim(0);
  const std::size_t per_image = images.size() / batch;
  const std::size_t n = config_.n_features;
  std::vector<double> logits;
  logits.reserve(batch * config_.n_classes);
  for (std::size_t start = 0; start < batch; start += kInferenceChunk) {
    const std::size_t len = std::min(kInferenceChunk, batch - start);
    const auto img = images.data().subspan(start * per_image, len * per_image);
    ad::Tape tape;
    std::vector<Var> params;
    for (const Parameter& p : params_) params.push_back(tape.constant(p.value));
    const Var x = tape.constant(Tensor({len, images.dim(1), images.dim(2), images.dim(3)},
                                       std::vector<double>(img.begin(), img.end())));
    Var d;
    if (uses_features) {
      const auto f = features.data().subspan(start * n, len * n);
      d = tape.constant(Tensor({len, n}, std::vector<double>(f.begin(), f.end())));
    }
    const Var out = run(params, x, uses_features ? &d : nullptr, false);
    logits.insert(logits.end(), out.value().data().begin(), out.value().data().end());
  }
  return Tensor({batch, config_.n_classes}, std::move(logits));
}

std::vector<std::size_t> Model::predict(const Tensor& images, const Tensor& features) const {
  return nn::argmax_rows(forward(images, features));
}

Tensor Model::extract_weight_matrices(const Tensor& images) const {
  if (config_.fusion != FusionKind::kCompNet) {
    throw VariantError("weight matrices exist only for the compnet model, not " + compnet::to_string(config_.fusion));
  }
  check_inputs(images, nullptr);
  const std::size_t batch = images.dim(0);
  const std::size_t per_image = images.size() / batch;
  const std::size_t m = config_.n_classes * config_.n_features;
  std::vector<double> out;
  out.reserve(batch * m);
  for (std::size_t start = 0; start < batch; start += kInferenceChunk) {
    const std::size_t len = std::min(kInferenceChunk, batch - start);
    const auto img = images.data().subspan(start * per_image, len * per_image);
    ad::Tape tape;
    std::vector<Var> params;
    for (const Parameter& p : params_) params.push_back(tape.constant(p.value));
    const Var x = tape.constant(Tensor({len, images.dim(1), images.dim(2), images.dim(3)},
                                       std::vector<double>(img.begin(), img.end())));
    const Var learned = run(params, x, nullptr, true);
    out.insert(out.end(), learned.value().data().begin(), learned.value().data().end());
  }
  return Tensor({batch, config_.n_classes, config_.n_features}, std::move(out));
}

ImportanceReport importance_from_weight_matrices(const Tensor& weight_matrices) {
  if (weight_matrices.rank() != 3) {
    throw ShapeError("weight matrices must be [B,classes,features], got " + ad::to_string(weight_matrices.shape()));
  }
  const std::size_t batch = weight_matrices.dim(0), classes = weight_matrices.dim(1), n = weight_matrices.dim(2);
  ImportanceReport report;
  report.importance.assign(classes, std::vector<double>(n, 0.0));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < classes; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        report.importance[k][j] += std::abs(weight_matrices[(b * classes + k) * n + j]);
      }
    }
  }
  for (auto& row : report.importance) {
    for (double& v : row) v /= static_cast<double>(batch);
  }
  report.ranking.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& order = report.ranking[k];
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& imp = report.importance[k];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
  }
  return report;
}

ImportanceReport feature_importance(const Model& model, const data::Dataset& ds) {
  if (ds.empty()) throw DataError("feature importance needs a non-empty dataset");
  const auto idx = ds.all_indices();
  return importance_from_weight_matrices(model.extract_weight_matrices(ds.images(idx)));
}

}  // namespace compnet
