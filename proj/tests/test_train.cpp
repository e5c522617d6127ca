#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "concad/folds.hpp"
#include "concad/metrics.hpp"
#include "concad/synthetic.hpp"
#include "concad/training.hpp"

using namespace concad;

namespace {

std::vector<SegmentBundle> labeled(std::size_t n_apnea, std::size_t n_normal, std::size_t records = 1) {
  std::vector<SegmentBundle> v;
  for (std::size_t i = 0; i < n_apnea + n_normal; ++i) {
    SegmentBundle b;
    b.ecg = {static_cast<double>(i), 0.0, 1.0, 2.0};
    b.rri = {0.0, 1.0};
    b.rpe = {1.0, 0.0};
    b.label = i < n_apnea ? Label::apnea : Label::normal;
    b.record_id = "r" + std::to_string(i % records);
    b.epoch_index = static_cast<std::int64_t>(i);
    v.push_back(std::move(b));
  }
  return v;
}

const PreparedDataset& small_dataset() {
  static const PreparedDataset ds = [] {
    SyntheticConfig cfg;
    cfg.records = 2;
    cfg.epochs_per_record = 8;
    return make_synthetic_dataset(cfg, PrepConfig{});
  }();
  return ds;
}

ArchConfig small_arch() {
  return ArchConfig::parse(
      "ecg = ConvBlock(4,50,10)-MaxPool(2)-ConvBlock(4,8,4)\n"
      "rri = ConvBlock(4,8,4)-MaxPool(2)-ConvBlock(4,4,2)\n"
      "rpe = ConvBlock(4,8,4)-MaxPool(2)-ConvBlock(4,4,2)\n"
      "k = 6\nproj_dim = 4\nclf_hidden = 4\n");
}

ConcadModel small_model(std::uint64_t seed) {
  const auto& ds = small_dataset();
  RngStream rng(seed);
  return ConcadModel(small_arch(), InputDims{ds.ecg_length(), ds.resample_per_epoch, ds.resample_per_epoch}, rng);
}

TrainConfig short_config() {
  TrainConfig c;
  c.epochs = 2;
  c.drop_epoch = 1;
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Batches, TrainModeDoublesWithAugmentation) {
  const auto set = labeled(3, 5);
  RngStream rng(1);
  const AugmentationSpec aug;
  const auto batches = make_batches(set, 4, &aug, rng, BatchMode::train);
  ASSERT_EQ(batches.size(), 2u);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_EQ(b.originals, 4u);
    ASSERT_EQ(b.items.size(), 8u);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(b.source[i + 4], b.source[i]);
      EXPECT_EQ(b.items[i + 4].label, b.items[i].label);
      EXPECT_EQ(b.items[i], set[b.source[i]]);
      seen.insert(b.source[i]);
    }
  }
  EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Batches, EvalModeKeepsOrder) {
  const auto set = labeled(2, 3);
  RngStream rng(1);
  const AugmentationSpec aug;
  const auto batches = make_batches(set, 2, &aug, rng, BatchMode::eval);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2].items.size(), 1u);
  std::size_t next = 0;
  for (const auto& b : batches)
    for (auto s : b.source) EXPECT_EQ(s, next++);
}

TEST(Batches, SameSeedSameOrder) {
  const auto set = labeled(10, 10);
  RngStream a(9), b(9), c(10);
  const auto x = make_batches(set, 6, nullptr, a, BatchMode::train);
  const auto y = make_batches(set, 6, nullptr, b, BatchMode::train);
  const auto z = make_batches(set, 6, nullptr, c, BatchMode::train);
  EXPECT_EQ(x[0].source, y[0].source);
  EXPECT_NE(x[0].source, z[0].source);
  EXPECT_EQ(x.size(), 4u);
}

TEST(Metrics, PerfectPredictions) {
  std::vector<int> t(20), p(20);
  for (int i = 0; i < 20; ++i) t[i] = p[i] = i % 2;
  const auto m = compute_metrics(t, p);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.n_eval, 20u);
}

TEST(Metrics, MajorityClassifier) {
  const auto m = metrics_from_confusion({{{70, 0}, {30, 0}}});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
  // F1 = 2*70/(70+100) for the majority class, 0 for the other
  EXPECT_NEAR(m.macro_f1, 0.5 * 140.0 / 170.0, 1e-15);
  EXPECT_NEAR(m.macro_f1, 0.4118, 1e-4);
  EXPECT_EQ(m.per_class[1].precision, 0.0);
}

TEST(Metrics, ReferenceConfusion) {
  // sklearn.metrics.f1_score(average="macro") on the same confusion matrix.
  const auto m = metrics_from_confusion({{{50, 10}, {5, 35}}});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.85);
  EXPECT_NEAR(m.macro_f1, 0.8465473145780051, 1e-15);
  EXPECT_NEAR(m.per_class[0].precision, 50.0 / 55.0, 1e-15);
  EXPECT_NEAR(m.per_class[1].recall, 35.0 / 40.0, 1e-15);
  EXPECT_THROW(metrics_from_confusion({}), std::invalid_argument);
}

TEST(Folds, TenEqualDisjointFolds) {
  const auto set = labeled(40, 60);
  const auto plan = kfold_split(set, 10, FoldMode::segment, 3);
  ASSERT_EQ(plan.size(), 10u);
  std::set<std::size_t> all;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto f = plan.fold(i);
    EXPECT_EQ(f.eval.size(), 10u);
    EXPECT_EQ(f.train.size(), 90u);
    for (auto e : f.eval) {
      EXPECT_TRUE(all.insert(e).second);
      EXPECT_FALSE(std::binary_search(f.train.begin(), f.train.end(), e));
    }
  }
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(kfold_split(set, 10, FoldMode::segment, 3).folds, plan.folds);
  EXPECT_NE(kfold_split(set, 10, FoldMode::segment, 4).folds, plan.folds);
}

TEST(Folds, RecordingModeKeepsRecordsTogether) {
  const auto set = labeled(30, 30, 12);
  const auto plan = kfold_split(set, 4, FoldMode::recording, 1);
  for (const auto& fold : plan.folds) {
    std::set<std::string> ids;
    for (auto i : fold) ids.insert(set[i].record_id);
    EXPECT_EQ(ids.size(), 3u);
    EXPECT_EQ(fold.size(), 15u);
  }
  EXPECT_THROW(kfold_split(set, 13, FoldMode::recording, 1), std::invalid_argument);
  EXPECT_EQ(parse_fold_mode("recording"), FoldMode::recording);
  EXPECT_THROW(parse_fold_mode("x"), std::invalid_argument);
}

TEST(Subset, FractionIsStratified) {
  const auto set = labeled(400, 600);
  const auto all = subset_fraction(set, 1.0, 1);
  EXPECT_EQ(all.indices.size(), 1000u);
  const auto tenth = subset_fraction(set, 0.1, 1);
  std::size_t apnea = 0;
  for (auto i : tenth.indices) apnea += set[i].label == Label::apnea;
  EXPECT_EQ(tenth.indices.size(), 100u);
  EXPECT_EQ(apnea, 40u);
  EXPECT_EQ(subset_fraction(set, 0.1, 1).indices, tenth.indices);

  const auto tiny = subset_fraction(labeled(1, 50), 0.05, 2);
  EXPECT_EQ(tiny.raised_classes, 1u);
  EXPECT_EQ(tiny.indices.size(), 4u);
  EXPECT_THROW(subset_fraction(set, 0.0, 1), std::invalid_argument);
}

TEST(TrainConfig, LearningRateScheduleAndValidation) {
  TrainConfig c;
  c.epochs = 10;
  c.drop_epoch = 4;
  EXPECT_EQ(c.lr_at(3), 0.005);
  EXPECT_EQ(c.lr_at(4), 0.001);
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  auto flat = c;
  flat.drop_epoch = 10;
  EXPECT_NO_THROW(flat.validate());
  EXPECT_EQ(flat.lr_at(9), 0.005);
  bad = c;
  bad.drop_epoch = 11;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.batch_size = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.loss.tau = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Training, LambdaOneMatchesCrossEntropyOnly) {
  const auto& ds = small_dataset();
  auto hybrid_cfg = short_config();
  hybrid_cfg.loss.lambda = 1.0;
  auto ce_cfg = short_config();
  ce_cfg.contrastive = false;

  auto a = small_model(2);
  auto b = small_model(2);
  const auto ra = train(a, ds.bundles, {}, hybrid_cfg);
  const auto rb = train(b, ds.bundles, {}, ce_cfg);
  ASSERT_EQ(ra.logs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) EXPECT_EQ(ra.logs[e].ce, rb.logs[e].ce) << e;
  EXPECT_EQ(rb.logs[0].sc, 0.0);
  EXPECT_GT(ra.logs[0].sc, 0.0);
  EXPECT_EQ(ra.logs[0].lr, 0.005);
  EXPECT_EQ(ra.logs[1].lr, 0.001);
}

TEST(Training, DeterministicAndSelectsBest) {
  const auto& ds = small_dataset();
  auto cfg = short_config();
  auto a = small_model(3);
  auto b = small_model(3);
  const auto ra = train(a, ds.bundles, {}, cfg);
  const auto rb = train(b, ds.bundles, {}, cfg);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(ra.logs[e].loss, rb.logs[e].loss);
    ASSERT_TRUE(ra.logs[e].eval.has_value());
  }
  EXPECT_EQ(ra.logs[0].batches, 2u);
  EXPECT_GE(ra.best_epoch, 1u);
  double best = 0.0;
  for (const auto& l : ra.logs) best = std::max(best, l.eval->macro_f1);
  EXPECT_EQ(ra.best_metrics.macro_f1, best);
}

TEST(Training, ExportEmbeddings) {
  const auto& ds = small_dataset();
  auto model = small_model(4);
  model.scaler() = InputScaler::fit(ds.bundles);
  const auto path = std::filesystem::temp_directory_path() / "concad_test_emb.csv";
  export_embeddings(model, ds.bundles, path);
  std::ifstream is(path);
  std::string line, first_row;
  std::getline(is, line);
  EXPECT_EQ(line.rfind("record_id,epoch_index,label,c1,", 0), 0u);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (rows == 0) first_row = line;
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6 + 2) << line;
  }
  EXPECT_EQ(rows, ds.bundles.size());

  export_embeddings(model, ds.bundles, path);
  std::ifstream again(path);
  std::getline(again, line);
  std::getline(again, line);
  EXPECT_EQ(line, first_row);
  std::filesystem::remove(path);
}
