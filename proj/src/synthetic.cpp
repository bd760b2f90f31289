#include "compnet/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "compnet/error.hpp"

namespace compnet::data {
using nlohmann::json;

void SynthSpec::validate() const {
  if (n_samples < 1) throw ConfigError("n_samples must be positive");
  for (std::size_t d : image_shape) {
    if (d == 0) throw ConfigError("image_shape dimensions must be positive");
  }
  if (n_features < 1) throw ConfigError("n_features must be positive");
  if (n_informative > n_features) throw ConfigError("n_informative exceeds n_features");
  if (n_classes < 2 || n_classes > kMaxSyntheticClasses) {
    throw ConfigError("n_classes must lie in [2, " + std::to_string(kMaxSyntheticClasses) + "]");
  }
  if (!(image_reliability > 0.5 && image_reliability <= 1.0)) {
    throw ConfigError("image_reliability must lie in (0.5, 1]");
  }
  if (!(feature_reliability > 0.5 && feature_reliability <= 1.0)) {
    throw ConfigError("feature_reliability must lie in (0.5, 1]");
  }
  if (!(pixel_noise >= 0.0) || !std::isfinite(pixel_noise)) {
    throw ConfigError("pixel_noise must be a finite non-negative number");
  }
  if (class_balance && !(*class_balance > 0.0 && *class_balance < 1.0)) {
    throw ConfigError("class_balance must lie in (0, 1)");
  }
}

json SynthSpec::to_json() const {
  json j = {
      {"name", name},
      {"n_samples", n_samples},
      {"image_shape", image_shape},
      {"n_features", n_features},
      {"n_informative", n_informative},
      {"n_classes", n_classes},
      {"image_reliability", image_reliability},
      {"feature_reliability", feature_reliability},
      {"pixel_noise", pixel_noise},
      {"seed", seed},
  };
  j["class_balance"] = class_balance ? json(*class_balance) : json(nullptr);
  return j;
}

SynthSpec SynthSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  SynthSpec s;
  try {
    s.name = j.value("name", s.name);
    s.n_samples = j.value("n_samples", s.n_samples);
    s.image_shape = j.value("image_shape", s.image_shape);
    s.n_features = j.value("n_features", s.n_features);
    s.n_informative = j.value("n_informative", s.n_informative);
    s.n_classes = j.value("n_classes", s.n_classes);
    s.image_reliability = j.value("image_reliability", s.image_reliability);
    s.feature_reliability = j.value("feature_reliability", s.feature_reliability);
    s.pixel_noise = j.value("pixel_noise", s.pixel_noise);
    s.seed = j.value("seed", s.seed);
    if (j.contains("class_balance") && !j["class_balance"].is_null()) {
      s.class_balance = j["class_balance"].get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

Tensor render_template(std::size_t cls, const ImageShape& shape) {
  const std::size_t c = shape[0], h = shape[1], w = shape[2];
  Tensor img = Tensor::zeros({c, h, w});
  const double side = static_cast<double>(std::min(h, w));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Pixel centre in units of the shorter side, origin at the image centre.
      const double u = (static_cast<double>(x) + 0.5 - static_cast<double>(w) / 2.0) / side;
      const double v = (static_cast<double>(y) + 0.5 - static_cast<double>(h) / 2.0) / side;
      const double px = 1.0 / side;
      bool on = false;
      switch (cls) {
        case 0:  // filled disc
          on = u * u + v * v <= 0.25 * 0.25;
          break;
        case 1:  // both diagonals
          on = std::abs(u - v) <= 1.1 * px || std::abs(u + v) <= 1.1 * px;
          break;
        case 2:  // hollow square
          on = std::max(std::abs(u), std::abs(v)) <= 0.35 && std::max(std::abs(u), std::abs(v)) >= 0.25;
          break;
        case 3:  // horizontal bars
          on = static_cast<long>(std::floor((v + 0.5) * 8.0)) % 2 == 0;
          break;
        default:
          throw ConfigError("no template for class " + std::to_string(cls));
      }
      if (on) {
        for (std::size_t ch = 0; ch < c; ++ch) img[(ch * h + y) * w + x] = 1.0;
      }
    }
  }
  return img;
}

double informative_sign(std::size_t cls, std::size_t j, std::size_t n_classes) {
  std::size_t bits = 1;
  while ((std::size_t{1} << bits) < n_classes) ++bits;
  return ((cls >> (j % bits)) & 1u) != 0 ? 1.0 : -1.0;
}

namespace {

std::size_t draw_label(std::mt19937_64& rng, const SynthSpec& spec) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (spec.class_balance) {
    if (unit(rng) < *spec.class_balance) return 0;
    std::uniform_int_distribution<std::size_t> rest(1, spec.n_classes - 1);
    return rest(rng);
  }
  std::uniform_int_distribution<std::size_t> any(0, spec.n_classes - 1);
  return any(rng);
}

// Returns `label` with probability `reliability`, else a uniformly chosen
// different class.
std::size_t draw_evidence(std::mt19937_64& rng, std::size_t label, double reliability,
                          std::size_t n_classes) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < reliability) return label;
  std::uniform_int_distribution<std::size_t> other(0, n_classes - 2);
  const std::size_t k = other(rng);
  return k >= label ? k + 1 : k;
}

}  // namespace

SyntheticDataset generate_synthetic_detailed(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Tensor> templates;
  for (std::size_t c = 0; c < spec.n_classes; ++c) templates.push_back(render_template(c, spec.image_shape));

  SyntheticDataset out;
  Dataset& ds = out.dataset;
  ds.name = spec.name;
  ds.image_shape = spec.image_shape;
  ds.n_features = spec.n_features;
  ds.n_classes = spec.n_classes;
  std::vector<std::size_t> informative(spec.n_informative);
  for (std::size_t j = 0; j < spec.n_informative; ++j) informative[j] = j;
  ds.provenance = {{"generator", "synthetic"}, {"spec", spec.to_json()}, {"informative_features", informative}};
  ds.samples.reserve(spec.n_samples);

  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const std::size_t label = draw_label(rng, spec);
    const std::size_t img_ev = draw_evidence(rng, label, spec.image_reliability, spec.n_classes);
    const std::size_t feat_ev = draw_evidence(rng, label, spec.feature_reliability, spec.n_classes);

    Tensor image = templates[img_ev];
    for (double& px : image.mutable_data()) px += spec.pixel_noise * gauss(rng);

    std::vector<double> features(spec.n_features);
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      const double mean = j < spec.n_informative ? informative_sign(feat_ev, j, spec.n_classes) : 0.0;
      features[j] = mean + gauss(rng);
    }

    char id[16];
    std::snprintf(id, sizeof id, "s%06zu", i);
    ds.samples.push_back(Sample{id, std::move(image), std::move(features), label});
    out.image_evidence.push_back(img_ev);
    out.feature_evidence.push_back(feat_ev);
  }
  return out;
}

Dataset generate_synthetic(const SynthSpec& spec) { return generate_synthetic_detailed(spec).dataset; }

std::vector<std::size_t> informative_features(const Dataset& ds) {
  if (!ds.provenance.is_object() || !ds.provenance.contains("informative_features")) return {};
  return ds.provenance["informative_features"].get<std::vector<std::size_t>>();
}

}  // namespace compnet::data
