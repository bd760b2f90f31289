#include "compnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "compnet/error.hpp"
#include "compnet/layers.hpp"

namespace compnet::train {
using nlohmann::json;

namespace {
constexpr std::size_t kEvalChunk = 256;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"momentum", momentum}, {"seed", seed},             {"shuffle", shuffle},
          {"eval_every", eval_every}, {"patience", patience}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.patience = j.value("patience", c.patience);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return c;
}

OptimState OptimState::for_model(const Model& model) {
  OptimState s;
  for (const Parameter& p : model.parameters()) s.velocity.push_back(Tensor::zeros(p.value.shape()));
  return s;
}

std::optional<double> History::final_gap() const {
  const HistoryEntry* e = last_evaluated();
  if (e == nullptr) return std::nullopt;
  return e->train->accuracy - e->test->accuracy;
}

const HistoryEntry* History::last_evaluated() const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->train && it->test) return &*it;
  }
  return nullptr;
}

void sgd_momentum_step(std::vector<Parameter>& params, std::span<const Tensor> grads, OptimState& state,
                       double learning_rate, double momentum) {
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw ShapeError("optimizer: parameter, gradient and velocity counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() || state.velocity[i].shape() != params[i].value.shape()) {
      throw ShapeError("optimizer: shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) throw NumericError("optimizer: non-finite gradient for " + params[i].name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.mutable_data();
    auto v = state.velocity[i].mutable_data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      w[k] -= learning_rate * v[k];
    }
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

Metrics train_epoch(Model& model, const data::Dataset& train, const TrainConfig& cfg, OptimState& state) {
  cfg.validate();
  if (train.empty()) throw DataError("cannot train on an empty dataset");
  if (state.velocity.empty()) state.velocity = OptimState::for_model(model).velocity;

  const std::vector<std::size_t> order = epoch_order(train.size(), cfg.seed, state.epoch, cfg.shuffle);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t batch_no = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
    const std::size_t len = std::min(cfg.batch_size, order.size() - start);
    const std::span<const std::size_t> idx(order.data() + start, len);
    const std::vector<std::size_t> labels = train.labels(idx);

    ad::Tape tape;
    const std::vector<Var> params = model.bind(tape);
    const Var images = tape.constant(train.images(idx));
    const Var features = tape.constant(train.features(idx));
    Var loss, logits;
    std::vector<Tensor> g;
    try {
      logits = model.forward(params, images, features);
      loss = nn::cross_entropy(logits, labels);
      if (!std::isfinite(loss.value().item())) throw NumericError("non-finite loss");
      const ad::Gradients grads = tape.backward(loss);
      g.reserve(params.size());
      for (const Var& p : params) g.push_back(grads[p]);
      sgd_momentum_step(model.parameters(), g, state, cfg.learning_rate, cfg.momentum);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(state.epoch + 1) + ", batch " +
                         std::to_string(batch_no));
    }
    const std::vector<std::size_t> pred = nn::argmax_rows(logits.value());
    for (std::size_t b = 0; b < len; ++b) correct += pred[b] == labels[b] ? 1 : 0;
    loss_sum += loss.value().item() * static_cast<double>(len);
  }
  ++state.epoch;
  const auto n = static_cast<double>(train.size());
  return Metrics{loss_sum / n, static_cast<double>(correct) / n, train.size()};
}

Metrics evaluate(const Model& model, const data::Dataset& ds) {
  if (ds.empty()) throw DataError("cannot evaluate on an empty dataset");
  const std::vector<std::size_t> all = ds.all_indices();
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < all.size(); start += kEvalChunk) {
    const std::size_t len = std::min(kEvalChunk, all.size() - start);
    const std::span<const std::size_t> idx(all.data() + start, len);
    const std::vector<std::size_t> labels = ds.labels(idx);
    const Tensor logits = model.forward(ds.images(idx), ds.features(idx));
    for (double l : nn::per_sample_cross_entropy(logits, labels)) loss_sum += l;
    const std::vector<std::size_t> pred = nn::argmax_rows(logits);
    for (std::size_t b = 0; b < len; ++b) correct += pred[b] == labels[b] ? 1 : 0;
  }
  const auto n = static_cast<double>(ds.size());
  if (!std::isfinite(loss_sum)) throw NumericError("evaluation produced a non-finite loss");
  return Metrics{loss_sum / n, static_cast<double>(correct) / n, ds.size()};
}

History fit(Model& model, const data::Dataset& train, const data::Dataset* test, const TrainConfig& cfg,
            OptimState& state) {
  cfg.validate();
  History history;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  while (state.epoch < cfg.epochs) {
    HistoryEntry entry;
    entry.running = train_epoch(model, train, cfg, state);
    entry.epoch = state.epoch;

    bool stop = false;
    if (cfg.patience > 0) {
      if (entry.running.loss < best_loss) {
        best_loss = entry.running.loss;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        stop = true;
      }
    }
    const bool last = stop || state.epoch == cfg.epochs;
    if (last || state.epoch % cfg.eval_every == 0) {
      entry.train = evaluate(model, train);
      if (test != nullptr && !test->empty()) entry.test = evaluate(model, *test);
    }
    history.entries.push_back(entry);
    if (stop) break;
  }
  return history;
}

}  // namespace compnet::train
