#include <gtest/gtest.h>

#include <sstream>

#include "compnet/cli.hpp"
#include "compnet/io_util.hpp"
#include "support/fixtures.hpp"

using namespace compnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    nlohmann::json spec = fixtures::tiny_spec(48, 4).to_json();
    io::write_file_atomic(dir / "spec.json", spec.dump());
    nlohmann::json cfg = {
        {"seed", 2},
        {"model", {{"conv_filters", {2}}, {"kernel_size", 3}, {"dense_hidden", {5}}}},
        {"train", {{"epochs", 3}, {"batch_size", 8}, {"learning_rate", 0.05}}},
        {"split", {{"train_fraction", 0.75}, {"stratified", true}}},
    };
    io::write_file_atomic(dir / "cfg.json", cfg.dump());
    ASSERT_EQ(run({"generate", "--spec", path("spec.json"), "--out", path("data")}).code, 0);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  fixtures::TempDir dir{"cli"};
};

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::istringstream in(io::read_file(p));
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(io::split_csv_line(line));
  return rows;
}

}  // namespace

TEST_F(Cli, GenerateWritesFourFilesDeterministically) {
  Result r = run({"generate", "--out", path("d7"), "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.err;
  for (const char* f : {"manifest.json", "images.bin", "features.csv", "labels.csv"})
    EXPECT_TRUE(fs::exists(dir / "d7" / f));
  ASSERT_EQ(run({"generate", "--out", path("d7b"), "--seed", "7"}).code, 0);
  for (const char* f : {"manifest.json", "images.bin", "features.csv", "labels.csv"})
    EXPECT_EQ(io::read_file(dir / "d7" / f), io::read_file(dir / "d7b" / f));
}

TEST_F(Cli, GenerateRejectsBadSpecs) {
  io::write_file_atomic(dir / "bad.json", "{\"n_samples\": ");
  EXPECT_EQ(run({"generate", "--spec", path("bad.json"), "--out", path("x")}).code, 2);
  io::write_file_atomic(dir / "bad2.json", "{\"n_classes\": 9}");
  EXPECT_EQ(run({"generate", "--spec", path("bad2.json"), "--out", path("x")}).code, 2);
  EXPECT_EQ(run({"generate", "--spec", path("missing.json"), "--out", path("x")}).code, 3);
  EXPECT_EQ(run({"generate"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST_F(Cli, TrainEvalAndIdempotence) {
  Result r = run({"train", "--config", path("cfg.json"), "--data", path("data"), "--model", "compnet", "--out",
                  path("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto history = read_csv(dir / "run" / "history.csv");
  ASSERT_EQ(history.size(), 4u);
  EXPECT_EQ(history[0], (std::vector<std::string>{"epoch", "train_loss", "train_acc", "test_loss", "test_acc"}));
  EXPECT_TRUE(fs::exists(dir / "run" / "normalizer.json"));

  ASSERT_EQ(run({"train", "--config", path("cfg.json"), "--data", path("data"), "--model", "compnet", "--out",
                 path("run2")})
                .code,
            0);
  EXPECT_EQ(io::read_file(dir / "run" / "history.csv"), io::read_file(dir / "run2" / "history.csv"));
  EXPECT_EQ(io::read_file(dir / "run" / "checkpoint.cmpn"), io::read_file(dir / "run2" / "checkpoint.cmpn"));

  r = run({"eval", "--checkpoint", path("run/checkpoint.cmpn"), "--data", path("data"), "--split", "test"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto metrics = nlohmann::json::parse(io::read_file(dir / "run" / "metrics.json"));
  EXPECT_EQ(metrics["loss"].get<double>(), io::parse_double(history.back()[3]));
  EXPECT_EQ(metrics["accuracy"].get<double>(), io::parse_double(history.back()[4]));
  r = run({"eval", "--checkpoint", path("run/checkpoint.cmpn"), "--data", path("data"), "--split", "train"});
  metrics = nlohmann::json::parse(io::read_file(dir / "run" / "metrics.json"));
  EXPECT_EQ(metrics["accuracy"].get<double>(), io::parse_double(history.back()[2]));
  r = run({"eval", "--checkpoint", path("run/checkpoint.cmpn"), "--data", path("data"), "--split", "all"});
  EXPECT_EQ(nlohmann::json::parse(io::read_file(dir / "run" / "metrics.json"))["n"], 48);
}

TEST_F(Cli, TrainErrors) {
  nlohmann::json bad = {{"model", {{"learned_width", 7}, {"conv_filters", {2}}, {"dense_hidden", {5}}}}};
  io::write_file_atomic(dir / "bad.json", bad.dump());
  EXPECT_EQ(run({"train", "--config", path("bad.json"), "--data", path("data"), "--out", path("r")}).code, 2);
  EXPECT_EQ(run({"train", "--config", path("cfg.json"), "--data", path("data"), "--model", "late", "--out",
                 path("r")})
                .code,
            2);
  EXPECT_EQ(run({"train", "--config", path("cfg.json"), "--data", path("nowhere"), "--out", path("r")}).code, 3);

  nlohmann::json hot = nlohmann::json::parse(io::read_file(dir / "cfg.json"));
  hot["train"]["learning_rate"] = 1e200;
  io::write_file_atomic(dir / "hot.json", hot.dump());
  Result r = run({"train", "--config", path("hot.json"), "--data", path("data"), "--out", path("r")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
}

TEST_F(Cli, EvalErrors) {
  ASSERT_EQ(run({"train", "--config", path("cfg.json"), "--data", path("data"), "--out", path("run")}).code, 0);
  fs::copy_file(dir / "run" / "checkpoint.cmpn", dir / "lonely.cmpn");
  EXPECT_EQ(run({"eval", "--checkpoint", path("lonely.cmpn"), "--data", path("data")}).code, 2);
  std::string bytes = io::read_file(dir / "run" / "checkpoint.cmpn");
  bytes[1] = '?';
  io::write_file_atomic(dir / "run" / "checkpoint.cmpn", bytes);
  EXPECT_EQ(run({"eval", "--checkpoint", path("run/checkpoint.cmpn"), "--data", path("data")}).code, 3);
  EXPECT_EQ(run({"eval", "--checkpoint", path("run/checkpoint.cmpn"), "--data", path("data"), "--split", "dev"}).code,
            2);
}

TEST_F(Cli, CompareAndImportance) {
  Result r = run({"compare", "--config", path("cfg.json"), "--data", path("data"), "--models", "compnet,image_only",
                  "--seeds", "1,2", "--out", path("cmp")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("compnet vs image_only"), std::string::npos);
  auto rows = read_csv(dir / "cmp" / "compare.csv");
  ASSERT_EQ(rows.size(), 1u + 4u + 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"model", "seed", "train_acc", "test_acc", "gap"}));
  EXPECT_EQ(rows[5][1], "mean");
  std::string first = io::read_file(dir / "cmp" / "compare.csv");
  ASSERT_EQ(run({"compare", "--config", path("cfg.json"), "--data", path("data"), "--models", "compnet,image_only",
                 "--seeds", "1,2", "--out", path("cmp")})
                .code,
            0);
  EXPECT_EQ(io::read_file(dir / "cmp" / "compare.csv"), first);

  EXPECT_EQ(run({"compare", "--config", path("cfg.json"), "--data", path("data"), "--models", "compnet", "--seeds",
                 "1", "--out", path("cmp1")})
                .code,
            2);

  r = run({"importance", "--checkpoint", path("cmp/runs/compnet-seed1/checkpoint.cmpn"), "--data", path("data"),
           "--out", path("imp.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto imp = read_csv(dir / "imp.csv");
  ASSERT_EQ(imp.size(), 1u + 2u * 4u);
  EXPECT_EQ(imp[0], (std::vector<std::string>{"class", "feature_index", "mean_abs_weight", "rank"}));
  EXPECT_EQ(run({"importance", "--checkpoint", path("cmp/runs/image_only-seed1/checkpoint.cmpn"), "--data",
                 path("data"), "--out", path("imp2.csv")})
                .code,
            2);
}
