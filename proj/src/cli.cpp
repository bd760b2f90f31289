#include "compnet/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "compnet/checkpoint.hpp"
#include "compnet/error.hpp"
#include "compnet/experiment.hpp"
#include "compnet/io_util.hpp"
#include "compnet/synthetic.hpp"

namespace compnet::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_config(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw IoError(std::string(what) + " file not found: " + path.string());
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * fraction;
  return os.str();
}

struct GenerateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  data::SynthSpec spec = a.spec.empty() ? data::SynthSpec{} : data::SynthSpec::from_json(read_json_config(a.spec, "spec"));
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  const data::Dataset ds = data::generate_synthetic(spec);
  const fs::path manifest = data::save_dataset(ds, a.out);
  std::vector<std::size_t> counts(ds.n_classes, 0);
  for (const auto& s : ds.samples) ++counts[s.label];
  out << "wrote " << ds.size() << " samples to " << manifest.string() << "\n";
  for (std::size_t c = 0; c < counts.size(); ++c) out << "  class " << c << ": " << counts[c] << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string test_data;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

RunConfig load_run_config(const std::string& config_path, const data::Dataset& ds, const std::string& model,
                          std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs) {
  json j = config_path.empty() ? json::object() : read_json_config(config_path, "config");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!model.empty()) {
    if (!j.contains("model")) j["model"] = json::object();
    if (!j["model"].is_object()) throw ConfigError("config 'model' must be an object");
    j["model"]["fusion_kind"] = model;
  }
  RunConfig cfg = RunConfig::resolve(j, ds);
  if (seed) cfg.set_seed(*seed);
  if (epochs) cfg.train.epochs = *epochs;
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const data::Dataset ds = data::load_dataset(a.data);
  std::optional<data::Dataset> test;
  if (!a.test_data.empty()) test = data::load_dataset(a.test_data);
  const RunConfig cfg = load_run_config(a.config, ds, a.model, a.seed, a.epochs);
  ensure_dir(a.out);

  const RunResult result = run_experiment(ds, test ? &*test : nullptr, cfg);
  json meta = {{"data", fs::absolute(a.data).lexically_normal().string()}, {"pre_split", test.has_value()}};
  write_run_artifacts(a.out, result, cfg, meta);
  out << "model " << to_string(cfg.model.fusion) << ", " << result.model.parameter_count() << " parameters, "
      << cfg.train.epochs << " epochs\n";
  out << "train accuracy " << percent(result.train_metrics.accuracy) << "%, test accuracy "
      << percent(result.test_metrics.accuracy) << "%, gap "
      << percent(result.train_metrics.accuracy - result.test_metrics.accuracy) << " points\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string normalizer;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const fs::path ckpt_path = a.checkpoint;
  const fs::path norm_path = a.normalizer.empty() ? ckpt_path.parent_path() / "normalizer.json" : fs::path(a.normalizer);
  if (!fs::exists(norm_path)) {
    throw ConfigError("normalizer not found at " + norm_path.string() + "; refusing to evaluate raw features");
  }
  const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  data::Normalizer normalizer;
  try {
    normalizer = data::Normalizer::from_json(json::parse(io::read_file(norm_path)));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("normalizer is not valid JSON: ") + e.what());
  }
  const data::Dataset ds = data::load_dataset(a.data);

  data::Dataset selected;
  if (a.split == "all") {
    selected = ds;
  } else {
    if (ckpt.run.value("pre_split", false)) {
      throw ConfigError("checkpoint was trained on pre-split data; pass that directory with --split all");
    }
    if (!ckpt.run.contains("split")) throw ConfigError("checkpoint carries no split settings; use --split all");
    data::SplitOptions opts;
    const json& s = ckpt.run["split"];
    opts.train_fraction = s.at("train_fraction").get<double>();
    opts.seed = s.at("seed").get<std::uint64_t>();
    opts.stratified = s.at("stratified").get<bool>();
    auto [train_part, test_part] = data::split(ds, opts);
    selected = a.split == "train" ? std::move(train_part) : std::move(test_part);
  }
  const train::Metrics m = train::evaluate(ckpt.model, normalizer.apply(selected));

  const json metrics = {{"split", a.split}, {"loss", m.loss}, {"accuracy", m.accuracy}, {"n", m.n}};
  const fs::path out_path = a.out.empty() ? ckpt_path.parent_path() / "metrics.json" : fs::path(a.out);
  io::write_file_atomic(out_path, metrics.dump(2) + "\n");
  out << "split " << a.split << ": n=" << m.n << " loss=" << io::format_double(m.loss)
      << " accuracy=" << io::format_double(m.accuracy) << "\n";
  return kOk;
}

struct CompareArgs {
  std::string config;
  std::string data;
  std::vector<std::string> models;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<std::size_t> epochs;
};

struct CompareRow {
  std::string model;
  std::uint64_t seed;
  double train_acc;
  double test_acc;
};

std::string compare_csv(const std::vector<CompareRow>& rows, const std::vector<std::string>& models, bool summary) {
  std::string csv = "model,seed,train_acc,test_acc,gap\n";
  for (const CompareRow& r : rows) {
    csv += r.model + ',' + std::to_string(r.seed) + ',' + io::format_double(r.train_acc) + ',' +
           io::format_double(r.test_acc) + ',' + io::format_double(r.train_acc - r.test_acc) + '\n';
  }
  if (summary) {
    for (const std::string& m : models) {
      double tr = 0.0, te = 0.0, gap = 0.0;
      std::size_t n = 0;
      for (const CompareRow& r : rows) {
        if (r.model != m) continue;
        tr += r.train_acc;
        te += r.test_acc;
        gap += r.train_acc - r.test_acc;
        ++n;
      }
      const auto d = static_cast<double>(n);
      csv += m + ",mean," + io::format_double(tr / d) + ',' + io::format_double(te / d) + ',' +
             io::format_double(gap / d) + '\n';
    }
  }
  return csv;
}

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  if (a.models.size() < 2) throw ConfigError("compare needs at least two models");
  if (a.seeds.empty()) throw ConfigError("compare needs at least one seed");
  for (const std::string& m : a.models) parse_fusion_kind(m);
  const data::Dataset ds = data::load_dataset(a.data);
  ensure_dir(a.out);
  const fs::path csv_path = fs::path(a.out) / "compare.csv";

  std::vector<CompareRow> rows;
  for (const std::string& m : a.models) {
    for (std::uint64_t seed : a.seeds) {
      try {
        const RunConfig cfg = load_run_config(a.config, ds, m, seed, a.epochs);
        const RunResult result = run_experiment(ds, nullptr, cfg);
        const json meta = {{"data", fs::absolute(a.data).lexically_normal().string()}, {"pre_split", false}};
        write_run_artifacts(fs::path(a.out) / "runs" / (m + "-seed" + std::to_string(seed)), result, cfg, meta);
        rows.push_back({m, seed, result.train_metrics.accuracy, result.test_metrics.accuracy});
        out << m << " seed " << seed << ": train " << percent(result.train_metrics.accuracy) << "%, test "
            << percent(result.test_metrics.accuracy) << "%\n";
      } catch (const Error&) {
        io::write_file_atomic(csv_path, compare_csv(rows, a.models, false));
        err << "run " << m << " seed " << seed << " failed; partial results in " << csv_path.string() << "\n";
        throw;
      }
    }
  }
  io::write_file_atomic(csv_path, compare_csv(rows, a.models, true));

  std::map<std::string, std::pair<double, double>> means;  // model -> (test acc, gap)
  for (const std::string& m : a.models) {
    double te = 0.0, gap = 0.0;
    for (const CompareRow& r : rows) {
      if (r.model != m) continue;
      te += r.test_acc;
      gap += r.train_acc - r.test_acc;
    }
    const auto n = static_cast<double>(a.seeds.size());
    means[m] = {te / n, gap / n};
    out << m << " mean: test " << percent(te / n) << "%, gap " << percent(gap / n) << " points\n";
  }
  if (means.count("compnet") != 0) {
    for (const std::string& m : a.models) {
      if (m == "compnet") continue;
      const double delta = means["compnet"].first - means[m].first;
      out << "compnet vs " << m << ": " << (delta >= 0 ? "+" : "") << percent(delta) << " points test accuracy\n";
    }
  }
  return kOk;
}

struct ImportanceArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

int cmd_importance(const ImportanceArgs& a, std::ostream& out) {
  const train::Checkpoint ckpt = train::load_checkpoint(a.checkpoint);
  if (ckpt.model.config().fusion != FusionKind::kCompNet) {
    throw VariantError("importance needs a compnet checkpoint, got " + to_string(ckpt.model.config().fusion));
  }
  const data::Dataset ds = data::load_dataset(a.data);
  const ImportanceReport report = feature_importance(ckpt.model, ds);
  io::write_file_atomic(a.out, importance_csv(report));
  out << "wrote " << report.importance.size() * ds.n_features << " rows to " << a.out << "\n";
  for (std::size_t k = 0; k < report.ranking.size(); ++k) {
    out << "  class " << k << " top features:";
    for (std::size_t r = 0; r < std::min<std::size_t>(5, report.ranking[k].size()); ++r) out << ' ' << report.ranking[k][r];
    out << "\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CompNet: image-conditioned weighting of designed features", "compnet"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a seeded synthetic image + feature dataset");
  generate->add_option("--spec", gen.spec, "Synthetic spec JSON (defaults when omitted)");
  generate->add_option("--out", gen.out, "Output dataset directory")->required();
  generate->add_option("--seed", gen.seed, "Seed (overrides the spec)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write checkpoint, history and normalizer");
  train_cmd->add_option("--config", tr.config, "Run config JSON");
  train_cmd->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  train_cmd->add_option("--test-data", tr.test_data, "Held-out dataset (skips the split)");
  train_cmd->add_option("--model", tr.model, "compnet | concat | image_only");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Seed for init, shuffling and split");
  train_cmd->add_option("--epochs", tr.epochs, "Override the configured epoch count");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--split", ev.split, "train | test | all")->check(CLI::IsMember({"train", "test", "all"}));
  eval_cmd->add_option("--normalizer", ev.normalizer, "normalizer.json (default: next to the checkpoint)");
  eval_cmd->add_option("--out", ev.out, "metrics.json path (default: next to the checkpoint)");

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "Train several models over several seeds and tabulate");
  compare->add_option("--config", cmp.config, "Run config JSON");
  compare->add_option("--data", cmp.data, "Dataset directory or manifest")->required();
  compare->add_option("--models", cmp.models, "Model kinds")->required()->delimiter(',');
  compare->add_option("--seeds", cmp.seeds, "Seeds")->required()->delimiter(',');
  compare->add_option("--out", cmp.out, "Output directory")->required();
  compare->add_option("--epochs", cmp.epochs, "Override the configured epoch count");

  ImportanceArgs imp;
  auto* importance = app.add_subcommand("importance", "Export designed-feature importance from a compnet checkpoint");
  importance->add_option("--checkpoint", imp.checkpoint, "Checkpoint file")->required();
  importance->add_option("--data", imp.data, "Dataset directory or manifest")->required();
  importance->add_option("--out", imp.out, "importance.csv path")->required();

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("compnet");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*compare) return cmd_compare(cmp, out, err);
    if (*importance) return cmd_importance(imp, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const VariantError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  }
  return kUsage;
}

}  // namespace compnet::cli
