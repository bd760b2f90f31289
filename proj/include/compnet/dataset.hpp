#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compnet/tensor.hpp"
#include "json.hpp"

namespace compnet::data {

using ad::Tensor;
using ImageShape = std::array<std::size_t, 3>;  // C, H, W

struct Sample {
  std::string id;
  Tensor image;                  // [C,H,W]
  std::vector<double> features;  // designed features, length N
  std::size_t label = 0;
};

struct Dataset {
  std::string name;
  ImageShape image_shape{1, 1, 1};
  std::size_t n_features = 0;
  std::size_t n_classes = 2;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Throws DataError unless every sample agrees with the declared shapes,
  /// holds finite values and a label below n_classes.
  void validate() const;

  /// Stacked [B,C,H,W] images of the selected samples.
  Tensor images(std::span<const std::size_t> indices) const;
  /// Stacked [B,N] designed features of the selected samples.
  Tensor features(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> labels(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> all_indices() const;

  /// Copy holding only the selected samples, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Writes manifest.json, images.bin, features.csv and labels.csv into `dir`
/// (created if missing) and returns the manifest path.
std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Accepts either the manifest path or the directory holding it.
Dataset load_dataset(const std::filesystem::path& manifest);

/// Per-feature z-score with population standard deviation, fitted on a
/// training set. Features whose std falls below 1e-12 map to 0.
class Normalizer {
 public:
  static constexpr double kConstantThreshold = 1e-12;

  Normalizer() = default;
  Normalizer(std::vector<double> mean, std::vector<double> stddev);

  static Normalizer fit(const Dataset& train);

  Dataset apply(const Dataset& ds) const;
  std::vector<double> apply(std::span<const double> features) const;

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return stddev_; }
  bool is_constant(std::size_t j) const { return stddev_.at(j) < kConstantThreshold; }

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);

  friend bool operator==(const Normalizer&, const Normalizer&) = default;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

struct SplitOptions {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  bool stratified = true;
};

/// Disjoint, exhaustive, seeded split. Both halves keep the original sample
/// order. The stratified variant assigns round(fraction * n) training samples
/// in total, distributing them over classes by largest remainder.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitOptions& options);

}  // namespace compnet::data
