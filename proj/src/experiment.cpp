#include "compnet/experiment.hpp"

#include "compnet/error.hpp"
#include "compnet/io_util.hpp"

namespace compnet {
using nlohmann::json;

namespace {

void require_agrees(const json& j, const char* key, const json& actual) {
  if (j.contains(key) && !j[key].is_null() && j[key] != actual) {
    throw ConfigError(std::string("config ") + key + " = " + j[key].dump() + " disagrees with dataset (" +
                      actual.dump() + ")");
  }
}

}  // namespace

RunConfig RunConfig::resolve(const json& j, const data::Dataset& ds) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  std::uint64_t seed = 0;
  try {
    seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad seed: ") + e.what());
  }
  json model = j.value("model", json::object());
  json train = j.value("train", json::object());
  json split = j.value("split", json::object());
  if (!model.is_object() || !train.is_object() || !split.is_object()) {
    throw ConfigError("model, train and split sections must be JSON objects");
  }
  require_agrees(model, "image_shape", ds.image_shape);
  require_agrees(model, "n_classes", ds.n_classes);
  require_agrees(model, "n_features", ds.n_features);
  model["image_shape"] = ds.image_shape;
  model["n_classes"] = ds.n_classes;
  model["n_features"] = ds.n_features;
  if (!model.contains("seed")) model["seed"] = seed;
  if (!train.contains("seed")) train["seed"] = seed;

  cfg.model = ModelConfig::from_json(model);
  cfg.train = train::TrainConfig::from_json(train);
  try {
    cfg.split.train_fraction = split.value("train_fraction", cfg.split.train_fraction);
    cfg.split.stratified = split.value("stratified", cfg.split.stratified);
    cfg.split.seed = split.value("seed", seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad split config: ") + e.what());
  }
  cfg.train.validate();
  return cfg;
}

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
  split.seed = seed;
}

json RunConfig::to_json() const {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"split",
           {{"train_fraction", split.train_fraction}, {"seed", split.seed}, {"stratified", split.stratified}}}};
}

RunResult run_experiment(const data::Dataset& data, const data::Dataset* test_data, const RunConfig& cfg) {
  cfg.model.validate();
  cfg.train.validate();
  data::Dataset train_raw, test_raw;
  if (test_data != nullptr) {
    train_raw = data;
    test_raw = *test_data;
  } else {
    std::tie(train_raw, test_raw) = data::split(data, cfg.split);
  }
  const data::Normalizer normalizer = data::Normalizer::fit(train_raw);
  const data::Dataset train_set = normalizer.apply(train_raw);
  const data::Dataset test_set = normalizer.apply(test_raw);

  Model model(cfg.model);
  train::OptimState state = train::OptimState::for_model(model);
  train::History history = train::fit(model, train_set, &test_set, cfg.train, state);
  const train::HistoryEntry* last = history.last_evaluated();
  if (last == nullptr) throw NumericError("training produced no evaluated epoch");
  const train::Metrics train_metrics = *last->train;
  const train::Metrics test_metrics = *last->test;
  return RunResult{std::move(model), std::move(state), normalizer, std::move(history), train_metrics,
                   test_metrics};
}

std::string history_csv(const train::History& history) {
  std::string out = "epoch,train_loss,train_acc,test_loss,test_acc\n";
  for (const train::HistoryEntry& e : history.entries) {
    const train::Metrics& tr = e.train_metrics();
    out += std::to_string(e.epoch) + ',' + io::format_double(tr.loss) + ',' + io::format_double(tr.accuracy) + ',';
    if (e.test) {
      out += io::format_double(e.test->loss) + ',' + io::format_double(e.test->accuracy);
    } else {
      out += ',';
    }
    out += '\n';
  }
  return out;
}

std::string importance_csv(const ImportanceReport& report) {
  std::string out = "class,feature_index,mean_abs_weight,rank\n";
  for (std::size_t k = 0; k < report.importance.size(); ++k) {
    std::vector<std::size_t> rank(report.importance[k].size());
    for (std::size_t r = 0; r < report.ranking[k].size(); ++r) rank[report.ranking[k][r]] = r + 1;
    for (std::size_t j = 0; j < report.importance[k].size(); ++j) {
      out += std::to_string(k) + ',' + std::to_string(j) + ',' + io::format_double(report.importance[k][j]) + ',' +
             std::to_string(rank[j]) + '\n';
    }
  }
  return out;
}

void write_run_artifacts(const std::filesystem::path& dir, const RunResult& result, const RunConfig& cfg,
                         const json& run_meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  json meta = run_meta;
  meta["split"] = cfg.to_json()["split"];
  train::save_checkpoint(dir / "checkpoint.cmpn", result.model, result.optimizer, cfg.train, meta);
  io::write_file_atomic(dir / "history.csv", history_csv(result.history));
  io::write_file_atomic(dir / "normalizer.json", result.normalizer.to_json().dump(2) + "\n");
}

}  // namespace compnet
