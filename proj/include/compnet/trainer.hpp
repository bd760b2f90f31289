#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "compnet/dataset.hpp"
#include "compnet/model.hpp"

namespace compnet::train {

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t eval_every = 1;
  // Stop once the running training loss has not improved for this many
  // epochs; 0 disables early stopping.
  std::size_t patience = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Momentum buffers (one per parameter) and the number of completed epochs.
struct OptimState {
  std::vector<Tensor> velocity;
  std::size_t epoch = 0;

  static OptimState for_model(const Model& model);
};

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
};

struct HistoryEntry {
  std::size_t epoch = 0;
  Metrics running;               // averaged over the epoch's minibatches
  std::optional<Metrics> train;  // full pass over the training set after the epoch
  std::optional<Metrics> test;

  /// Post-epoch training metrics when evaluated, running ones otherwise.
  const Metrics& train_metrics() const { return train ? *train : running; }
};

struct History {
  std::vector<HistoryEntry> entries;

  /// Train minus test accuracy at the last entry that evaluated both.
  std::optional<double> final_gap() const;
  const HistoryEntry* last_evaluated() const;
};

/// v <- momentum * v + g;  w <- w - lr * v.
void sgd_momentum_step(std::vector<Parameter>& params, std::span<const Tensor> grads, OptimState& state,
                       double learning_rate, double momentum);

/// One pass over seeded-shuffled minibatches (the last short batch included).
/// Advances state.epoch.
Metrics train_epoch(Model& model, const data::Dataset& train, const TrainConfig& cfg, OptimState& state);

/// Trains from state.epoch up to cfg.epochs, evaluating every cfg.eval_every
/// epochs and after the last one. `test` never influences the parameters.
History fit(Model& model, const data::Dataset& train, const data::Dataset* test, const TrainConfig& cfg,
            OptimState& state);

Metrics evaluate(const Model& model, const data::Dataset& ds);

/// Sample order of epoch `epoch` (0-based) for a run seed.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch, bool shuffle);

}  // namespace compnet::train
