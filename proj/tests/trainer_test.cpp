#include "hupa/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace hupa {
namespace {

struct TinyData {
  std::vector<Sample> train, val;
};

TinyData tiny_data(std::uint64_t seed) {
  SplitConfig cfg;
  cfg.train_maps = 3;
  cfg.val_maps = 1;
  cfg.test_maps = 1;
  cfg.start_fraction = 0.01;
  const SplitPlan plan = make_splits(seed, cfg);
  TinyData d;
  const std::vector<int> tm(plan.train_maps.begin(), plan.train_maps.end());
  const std::vector<Cell> tg(plan.train_goals.begin(), plan.train_goals.begin() + 20);
  d.train = build_samples(plan, tm, tg, StartSelection::subsample);
  const std::vector<int> vm(plan.val_maps.begin(), plan.val_maps.end());
  const std::vector<Cell> vg(plan.val_goals.begin(), plan.val_goals.begin() + 10);
  d.val = build_samples(plan, vm, vg, StartSelection::subsample);
  return d;
}

TEST(EarlyStopping, StopsPatienceEpochsAfterBest) {
  EarlyStopping s(3);
  EXPECT_TRUE(s.update(0, 0.5));
  EXPECT_TRUE(s.update(1, 0.6));
  EXPECT_FALSE(s.update(2, 0.6));  // tie keeps the earliest epoch
  EXPECT_FALSE(s.update(3, 0.1));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(4, 0.59));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1);
  EXPECT_THROW(EarlyStopping(0), std::invalid_argument);
}

TEST(Train, FirstBatchLossNearLogEight) {
  const TinyData d = tiny_data(1);
  for (ModelKind kind : {ModelKind::hupa, ModelKind::embedding}) {
    TrainConfig cfg;
    cfg.kind = kind;
    cfg.width = 16;
    cfg.max_epochs = 1;
    cfg.steps_per_epoch = 1;
    cfg.seed = 3;
    const TrainResult r = train(cfg, d.train, d.val);
    EXPECT_NEAR(r.history.first_batch_loss, std::log(8.0), 0.2) << model_kind_name(kind);
  }
}

TEST(Train, FrozenValidationScoreStopsTenEpochsAfterBest) {
  const TinyData d = tiny_data(2);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.steps_per_epoch = 1;
  cfg.max_epochs = 100;
  cfg.patience = 10;
  TrainHooks hooks;
  hooks.val_score = [](int epoch, const PolicyModel<float>&) { return epoch <= 4 ? 0.1 * epoch : 0.4; };
  const TrainResult r = train(cfg, d.train, d.val, hooks);
  EXPECT_EQ(r.history.best_epoch, 4);
  EXPECT_TRUE(r.history.stopped_early);
  ASSERT_EQ(r.history.epochs.size(), 15u);
  EXPECT_EQ(r.history.epochs.back().epoch, 4 + 10);
}

TEST(Train, RestoresBestEpochWeights) {
  const TinyData d = tiny_data(3);
  TrainConfig cfg;
  cfg.batch = 64;
  cfg.steps_per_epoch = 2;
  cfg.max_epochs = 6;
  cfg.patience = 2;
  std::vector<std::vector<float>> snapshots;
  TrainHooks hooks;
  // Best score at epoch 1, so later updates must be discarded.
  hooks.val_score = [&](int epoch, const PolicyModel<float>& m) {
    snapshots.push_back(m.params().flat_values());
    return epoch == 1 ? 1.0 : 0.0;
  };
  const TrainResult r = train(cfg, d.train, d.val, hooks);
  EXPECT_EQ(r.history.best_epoch, 1);
  EXPECT_EQ(r.model.params().flat_values(), snapshots[1]);
  EXPECT_NE(snapshots[1], snapshots.back());
}

TEST(Train, ReturnedModelReproducesBestValidationAccuracy) {
  const TinyData d = tiny_data(4);
  TrainConfig cfg;
  cfg.batch = 64;
  cfg.steps_per_epoch = 3;
  cfg.max_epochs = 4;
  const TrainResult r = train(cfg, d.train, d.val);
  EXPECT_EQ(evaluate(r.model, d.val).label_acc, r.history.best_val_acc);
}

TEST(Train, DeterministicHistory) {
  const TinyData d = tiny_data(5);
  TrainConfig cfg;
  cfg.kind = ModelKind::embedding;
  cfg.batch = 50;
  cfg.steps_per_epoch = 2;
  cfg.max_epochs = 3;
  cfg.seed = 11;
  const TrainResult a = train(cfg, d.train, d.val);
  const TrainResult b = train(cfg, d.train, d.val);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model.params().flat_values(), b.model.params().flat_values());
}

TEST(Train, NonFiniteLossReportsEpochAndBatch) {
  const TinyData d = tiny_data(6);
  TrainConfig cfg;
  cfg.lr = std::nan("");
  cfg.batch = 16;
  cfg.max_epochs = 1;
  try {
    train(cfg, d.train, d.val);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 0);
    EXPECT_EQ(e.batch(), 1);
  }
}

TEST(Train, RejectsBadConfig) {
  const TinyData d = tiny_data(7);
  TrainConfig cfg;
  cfg.batch = 0;
  EXPECT_THROW(train(cfg, d.train, d.val), std::invalid_argument);
  EXPECT_THROW(train(TrainConfig{}, {}, d.val), std::invalid_argument);
}

TEST(Evaluate, CanonicalStubScoresOne) {
  const TinyData d = tiny_data(8);
  const EvalMetrics m = evaluate_with(d.val, [](int, std::span<const Sample> rows, float* out) {
    for (std::size_t r = 0; r < rows.size(); ++r) out[8 * r + rows[r].label - 1] = 5.0f;
  });
  EXPECT_EQ(m.label_acc, 1.0);
  EXPECT_EQ(m.opt_acc, 1.0);
  EXPECT_EQ(m.count, d.val.size());
}

TEST(Evaluate, LabelAccuracyNeverExceedsOptimalAccuracy) {
  const TinyData d = tiny_data(9);
  PolicyModel<float> m({ModelKind::hupa, 16});
  m.init(1);
  const EvalMetrics e = evaluate(m, d.val);
  EXPECT_LE(e.label_acc, e.opt_acc);
  EXPECT_GT(e.loss, 0.0);
}

TEST(Evaluate, TiesBreakToLowestAction) {
  const Sample s{0, 1, 1, 1, 3, 8, 0x80};
  float tied[8] = {0, 0, 1, 1, 1, 0, 0, 0};
  EXPECT_EQ(nn::argmax(tied, 8), 2);
  const std::vector<Sample> one{s};
  // All-equal logits predict action 1, which is wrong here.
  const EvalMetrics m = evaluate_with(one, [](int, std::span<const Sample>, float* out) { std::fill_n(out, 8, 0.5f); });
  EXPECT_EQ(m.label_acc, 0.0);
  EXPECT_NEAR(m.loss, std::log(8.0), 1e-6);
}

TEST(Metadata, EchoesConfigAndHistory) {
  TrainConfig cfg;
  History h;
  h.epochs.push_back({0, 1.5, 0.25, 0.5, 3});
  h.best_epoch = 0;
  h.best_val_acc = 0.5;
  const std::string text = training_metadata(cfg, h, {{"note", "x"}});
  for (const char* key : {"kind=hupa\n", "lr=0.001\n", "batch=256\n", "patience=10\n", "best_epoch=0\n",
                          "epoch.0=1.5,0.25,0.5,3\n", "note=x\n"})
    EXPECT_NE(text.find(key), std::string::npos) << key;
}

}  // namespace
}  // namespace hupa
