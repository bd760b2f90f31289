#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "compnet/checkpoint.hpp"
#include "compnet/dataset.hpp"
#include "compnet/model.hpp"
#include "compnet/trainer.hpp"

namespace compnet {

/// Everything needed to reproduce one training run: model and train configs
/// plus the split protocol. Loaded from JSON of the form
///   {"seed": 1, "model": {...}, "train": {...}, "split": {...}}
/// where the top-level seed fills every seed the sub-objects leave unset.
struct RunConfig {
  ModelConfig model;
  train::TrainConfig train;
  data::SplitOptions split;

  /// Merges `j` with the dataset's geometry. Image shape, class count and
  /// feature count come from the dataset; if the JSON also states them they
  /// must agree. Throws ConfigError otherwise.
  static RunConfig resolve(const nlohmann::json& j, const data::Dataset& ds);

  /// Points every seed (model init, shuffling, split) at `seed`.
  void set_seed(std::uint64_t seed);

  nlohmann::json to_json() const;
};

struct RunResult {
  Model model;
  train::OptimState optimizer;
  data::Normalizer normalizer;
  train::History history;
  train::Metrics train_metrics;
  train::Metrics test_metrics;
};

/// Splits `data` (unless `test_data` is given), fits the normalizer on the
/// training part only, builds and trains the model.
RunResult run_experiment(const data::Dataset& data, const data::Dataset* test_data, const RunConfig& cfg);

/// Writes checkpoint.cmpn, history.csv and normalizer.json into `dir`.
void write_run_artifacts(const std::filesystem::path& dir, const RunResult& result, const RunConfig& cfg,
                         const nlohmann::json& run_meta);

std::string history_csv(const train::History& history);
std::string importance_csv(const ImportanceReport& report);

}  // namespace compnet
