#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "compnet/dataset.hpp"

namespace compnet::data {

/// Parameters of the seeded image + designed-feature benchmark. Each sample
/// draws a label, then an image-evidence class (equal to the label with
/// probability image_reliability, otherwise a uniformly chosen other class)
/// rendered as a template plus Gaussian pixel noise, and a feature-evidence
/// class that signs the means of the informative features. Nuisance features
/// are standard normal.
struct SynthSpec {
  std::string name = "synthetic";
  std::size_t n_samples = 2000;
  ImageShape image_shape{1, 32, 32};
  std::size_t n_features = 16;
  std::size_t n_informative = 8;
  std::size_t n_classes = 2;
  double image_reliability = 0.8;
  double feature_reliability = 0.8;
  double pixel_noise = 6.0;
  // Probability of class 0; the remaining mass is shared evenly. Unset means
  // uniform classes.
  std::optional<double> class_balance;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an invalid combination.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; wrong types raise ConfigError.
  static SynthSpec from_json(const nlohmann::json& j);
};

/// Number of template images available, i.e. the largest supported class count.
inline constexpr std::size_t kMaxSyntheticClasses = 4;

/// Noise-free template for `cls` at the given shape, amplitude 1 on 0.
Tensor render_template(std::size_t cls, const ImageShape& shape);

/// Sign (+1/-1) of informative feature `j`'s mean under evidence class `cls`.
double informative_sign(std::size_t cls, std::size_t j, std::size_t n_classes);

struct SyntheticDataset {
  Dataset dataset;
  std::vector<std::size_t> image_evidence;
  std::vector<std::size_t> feature_evidence;
};

/// Dataset plus the latent evidence classes behind every sample.
SyntheticDataset generate_synthetic_detailed(const SynthSpec& spec);

/// Pure function of `spec` (seed included).
Dataset generate_synthetic(const SynthSpec& spec);

/// Indices of the informative features recorded in a synthetic dataset's
/// provenance; empty when the dataset did not come from the generator.
std::vector<std::size_t> informative_features(const Dataset& ds);

}  // namespace compnet::data
