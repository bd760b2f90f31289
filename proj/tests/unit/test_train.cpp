#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "compnet/checkpoint.hpp"
#include "compnet/dataset.hpp"
#include "compnet/error.hpp"
#include "compnet/io_util.hpp"
#include "compnet/synthetic.hpp"
#include "compnet/trainer.hpp"
#include "support/fixtures.hpp"

using namespace compnet;
using namespace compnet::train;

namespace {

data::Dataset tiny_data(std::size_t n = 40, std::uint64_t seed = 1) {
  data::Dataset ds = data::generate_synthetic(fixtures::tiny_spec(n, seed));
  return data::Normalizer::fit(ds).apply(ds);
}

TrainConfig quick(std::size_t epochs, std::uint64_t seed = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.seed = seed;
  return c;
}

bool same_parameters(const Model& a, const Model& b) {
  if (a.parameters().size() != b.parameters().size()) return false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    if (!a.parameters()[i].value.bit_equal(b.parameters()[i].value)) return false;
  return true;
}

}  // namespace

TEST(Sgd, HandRecursion) {
  std::vector<Parameter> p{{"w", Tensor({1}, {1.0})}};
  OptimState st{{Tensor::zeros({1})}, 0};
  std::vector<Tensor> g{Tensor({1}, {0.5})};
  sgd_momentum_step(p, g, st, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p[0].value[0], 0.95);

  p[0].value[0] = 1.0;
  st.velocity[0] = Tensor::zeros({1});
  sgd_momentum_step(p, g, st, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(st.velocity[0][0], 0.5);
  EXPECT_DOUBLE_EQ(p[0].value[0], 0.95);
  sgd_momentum_step(p, g, st, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(st.velocity[0][0], 0.95);
  EXPECT_DOUBLE_EQ(p[0].value[0], 0.855);
}

TEST(Sgd, ZeroGradientAndErrors) {
  std::vector<Parameter> p{{"w", Tensor({2}, {1.0, -2.0})}};
  OptimState st{{Tensor::zeros({2})}, 0};
  std::vector<Tensor> zero{Tensor::zeros({2})};
  sgd_momentum_step(p, zero, st, 0.1, 0.9);
  EXPECT_EQ(p[0].value.values(), (std::vector<double>{1.0, -2.0}));
  st.velocity[0] = Tensor({2}, {1.0, 1.0});
  sgd_momentum_step(p, zero, st, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(p[0].value[0], 0.95);

  std::vector<Tensor> wrong{Tensor::zeros({3})};
  EXPECT_THROW(sgd_momentum_step(p, wrong, st, 0.1, 0.9), ShapeError);
  std::vector<Tensor> nan{Tensor({2}, {NAN, 0})};
  EXPECT_THROW(sgd_momentum_step(p, nan, st, 0.1, 0.9), NumericError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 2000u);
  EXPECT_EQ(c.batch_size, 64u);
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.learning_rate = 0.0;  // allowed: an exact no-op run
  EXPECT_NO_THROW(c.validate());
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  TrainConfig d = quick(7, 9);
  EXPECT_EQ(TrainConfig::from_json(d.to_json()).to_json(), d.to_json());
}

TEST(TrainEpoch, ZeroLearningRateIsNoOp) {
  data::Dataset ds = tiny_data();
  Model m(fixtures::tiny_model());
  Model before = m;
  OptimState st = OptimState::for_model(m);
  TrainConfig c = quick(1);
  c.learning_rate = 0.0;
  train_epoch(m, ds, c, st);
  train_epoch(m, ds, c, st);
  EXPECT_TRUE(same_parameters(m, before));
}

TEST(TrainEpoch, EpochOrderIsSeededPermutation) {
  auto a = epoch_order(10, 4, 0, true), b = epoch_order(10, 4, 0, true), c = epoch_order(10, 4, 1, true);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], i);
  auto plain = epoch_order(5, 4, 3, false);
  EXPECT_EQ(plain, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(TrainEpoch, OverfitsOneSample) {
  data::Dataset ds = data::generate_synthetic(fixtures::tiny_spec(1, 5));
  Model m(fixtures::tiny_model());
  TrainConfig c = quick(500);
  c.batch_size = 1;
  c.learning_rate = 0.01;
  OptimState st = OptimState::for_model(m);
  for (std::size_t e = 0; e < 500; ++e) train_epoch(m, ds, c, st);
  EXPECT_EQ(evaluate(m, ds).accuracy, 1.0);
  EXPECT_EQ(st.epoch, 500u);
}

TEST(TrainEpoch, Deterministic) {
  data::Dataset ds = tiny_data();
  Model a(fixtures::tiny_model()), b(fixtures::tiny_model());
  OptimState sa = OptimState::for_model(a), sb = OptimState::for_model(b);
  Metrics ma = train_epoch(a, ds, quick(1), sa), mb = train_epoch(b, ds, quick(1), sb);
  EXPECT_EQ(ma.loss, mb.loss);
  EXPECT_EQ(ma.accuracy, mb.accuracy);
  EXPECT_TRUE(same_parameters(a, b));
}

TEST(Fit, HistoryShape) {
  data::Dataset ds = tiny_data();
  auto [tr, te] = data::split(ds, {0.75, 1, true});
  Model m(fixtures::tiny_model());
  OptimState st = OptimState::for_model(m);
  History h1 = fit(m, tr, &te, quick(1), st);
  ASSERT_EQ(h1.entries.size(), 1u);
  EXPECT_TRUE(h1.entries[0].train && h1.entries[0].test);

  TrainConfig c = quick(6);
  c.eval_every = 4;
  Model m2(fixtures::tiny_model());
  OptimState st2 = OptimState::for_model(m2);
  History h = fit(m2, tr, &te, c, st2);
  ASSERT_EQ(h.entries.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(h.entries[i].epoch, i + 1);
  EXPECT_TRUE(h.entries[3].test.has_value());
  EXPECT_FALSE(h.entries[4].test.has_value());
  EXPECT_TRUE(h.entries[5].test.has_value());  // the last epoch is always evaluated
  EXPECT_EQ(h.last_evaluated(), &h.entries[5]);
  EXPECT_DOUBLE_EQ(*h.final_gap(), h.entries[5].train->accuracy - h.entries[5].test->accuracy);
}

TEST(Fit, TestSetNeverTouchesParameters) {
  data::Dataset ds = tiny_data();
  auto [tr, te] = data::split(ds, {0.75, 1, true});
  Model a(fixtures::tiny_model()), b(fixtures::tiny_model());
  OptimState sa = OptimState::for_model(a), sb = OptimState::for_model(b);
  fit(a, tr, &te, quick(4), sa);
  fit(b, tr, nullptr, quick(4), sb);
  EXPECT_TRUE(same_parameters(a, b));
}

TEST(Fit, SeparableDataIsLearnedPerfectly) {
  data::SynthSpec spec = fixtures::tiny_spec(64, 2);
  spec.pixel_noise = 0.0;
  spec.image_reliability = 1.0;
  data::Dataset ds = data::generate_synthetic(spec);
  ds = data::Normalizer::fit(ds).apply(ds);
  Model m(fixtures::tiny_model(FusionKind::kImageOnly));
  OptimState st = OptimState::for_model(m);
  fit(m, ds, nullptr, quick(60), st);
  EXPECT_EQ(evaluate(m, ds).accuracy, 1.0);
}

TEST(Evaluate, AccuracyAndPurity) {
  data::Dataset ds = tiny_data(12);
  Model m(fixtures::tiny_model());
  Model before = m;
  Metrics a = evaluate(m, ds), b = evaluate(m, ds);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.n, 12u);
  EXPECT_GE(a.loss, 0.0);
  EXPECT_TRUE(same_parameters(m, before));

  auto preds = m.predict(ds.images(ds.all_indices()), ds.features(ds.all_indices()));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) correct += preds[i] == ds.samples[i].label;
  EXPECT_EQ(a.accuracy, static_cast<double>(correct) / 12.0);
  EXPECT_THROW(evaluate(m, data::Dataset{}), DataError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  fixtures::TempDir dir("ck");
  data::Dataset ds = tiny_data();
  Model m(fixtures::tiny_model(FusionKind::kConcat));
  OptimState st = OptimState::for_model(m);
  fit(m, ds, nullptr, quick(2), st);
  save_checkpoint(dir / "m.cmpn", m, st, quick(2), {{"note", "x"}});
  Checkpoint ck = load_checkpoint(dir / "m.cmpn");
  EXPECT_TRUE(same_parameters(ck.model, m));
  EXPECT_EQ(ck.model.config().to_json(), m.config().to_json());
  EXPECT_EQ(ck.optimizer.epoch, 2u);
  for (std::size_t i = 0; i < st.velocity.size(); ++i) EXPECT_TRUE(ck.optimizer.velocity[i].bit_equal(st.velocity[i]));
  ASSERT_TRUE(ck.train_config.has_value());
  EXPECT_EQ(ck.train_config->to_json(), quick(2).to_json());
  EXPECT_EQ(ck.run["note"], "x");
  auto idx = ds.all_indices();
  EXPECT_TRUE(ck.model.forward(ds.images(idx), ds.features(idx)).bit_equal(m.forward(ds.images(idx), ds.features(idx))));
}

TEST(Checkpoint, Layout) {
  fixtures::TempDir dir("lay");
  Model m(fixtures::tiny_model());
  save_checkpoint(dir / "m.cmpn", m, OptimState::for_model(m));
  std::string bytes = io::read_file(dir / "m.cmpn");
  EXPECT_EQ(bytes.substr(0, 4), "CMPN");
  EXPECT_EQ(io::read_le_u32(bytes.data() + 4), 1u);
  const std::uint64_t hlen = io::read_le_u64(bytes.data() + 8);
  auto header = nlohmann::json::parse(bytes.substr(16, hlen));
  EXPECT_TRUE(header.contains("model_config"));
  EXPECT_EQ(bytes.size(), 16 + hlen + 2 * m.parameter_count() * sizeof(double));
  EXPECT_EQ(io::read_le_f64(bytes.data() + 16 + hlen), m.parameters()[0].value[0]);
}

TEST(Checkpoint, CorruptionIsDetected) {
  fixtures::TempDir dir("bad");
  Model m(fixtures::tiny_model());
  save_checkpoint(dir / "m.cmpn", m, OptimState::for_model(m));
  std::string bytes = io::read_file(dir / "m.cmpn");

  std::string magic = bytes;
  magic[0] = 'X';
  io::write_file_atomic(dir / "magic.cmpn", magic);
  EXPECT_THROW(load_checkpoint(dir / "magic.cmpn"), FormatError);

  std::string version = bytes;
  version[4] = 9;
  io::write_file_atomic(dir / "version.cmpn", version);
  EXPECT_THROW(load_checkpoint(dir / "version.cmpn"), FormatError);

  io::write_file_atomic(dir / "short.cmpn", bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_checkpoint(dir / "short.cmpn"), FormatError);
  io::write_file_atomic(dir / "tiny.cmpn", bytes.substr(0, 6));
  EXPECT_THROW(load_checkpoint(dir / "tiny.cmpn"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "absent.cmpn"), IoError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedTraining) {
  fixtures::TempDir dir("resume");
  data::Dataset ds = tiny_data();
  Model full(fixtures::tiny_model());
  OptimState sf = OptimState::for_model(full);
  fit(full, ds, nullptr, quick(6), sf);

  Model part(fixtures::tiny_model());
  OptimState sp = OptimState::for_model(part);
  fit(part, ds, nullptr, quick(3), sp);
  save_checkpoint(dir / "half.cmpn", part, sp, quick(6));
  Checkpoint ck = load_checkpoint(dir / "half.cmpn");
  fit(ck.model, ds, nullptr, quick(6), ck.optimizer);
  EXPECT_EQ(ck.optimizer.epoch, 6u);
  EXPECT_TRUE(same_parameters(ck.model, full));
}
