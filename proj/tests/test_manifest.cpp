#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "concad/manifest.hpp"

using namespace concad;

namespace {

const char* kMinimal = R"({"data": "d.cds", "arch": "a.arch", "train": {"epochs": 3, "lambda": 0.2, "tau": 0.5}})";

}  // namespace

TEST(Manifest, ParsesMinimalWithDefaults) {
  const auto m = ExperimentManifest::parse(kMinimal, "/base");
  EXPECT_EQ(m.data, "d.cds");
  EXPECT_EQ(m.arch, "a.arch");
  EXPECT_TRUE(m.eval_data.empty());
  EXPECT_EQ(m.train.epochs, 3u);
  EXPECT_EQ(m.train.loss.lambda, 0.2);
  EXPECT_EQ(m.train.loss.tau, 0.5);
  EXPECT_EQ(m.train.batch_size, 64u);
  EXPECT_EQ(m.train.drop_epoch, 3u);  // no drop within a short run
  EXPECT_EQ(m.folds, 10u);
  EXPECT_EQ(m.fold_mode, FoldMode::segment);
  EXPECT_EQ(m.fraction, 1.0);
  EXPECT_EQ(m.resolve("x.cds"), std::filesystem::path("/base/x.cds"));
  EXPECT_EQ(m.resolve("/abs/x.cds"), std::filesystem::path("/abs/x.cds"));
}

TEST(Manifest, ParsesNestedOptions) {
  const auto m = ExperimentManifest::parse(R"({
    "data": "d", "eval_data": "e", "arch": "a", "folds": 5, "fold_mode": "recording", "fraction": 0.25,
    "train": {"epochs": 4, "lambda": 0.5, "tau": 0.1, "batch_size": 16, "drop_epoch": 2, "seed": 9,
              "sc_include_anchor": true, "class_weights": [1.0, 2.0], "contrastive": false,
              "augmentation": {"reverse": false, "max_shift_fraction": 0.2}}})");
  EXPECT_EQ(m.eval_data, "e");
  EXPECT_EQ(m.folds, 5u);
  EXPECT_EQ(m.fold_mode, FoldMode::recording);
  EXPECT_EQ(m.fraction, 0.25);
  EXPECT_EQ(m.train.batch_size, 16u);
  EXPECT_EQ(m.train.seed, 9u);
  EXPECT_TRUE(m.train.loss.sc_include_anchor);
  ASSERT_TRUE(m.train.loss.class_weights.has_value());
  EXPECT_EQ((*m.train.loss.class_weights)[1], 2.0);
  EXPECT_FALSE(m.train.contrastive);
  EXPECT_FALSE(m.train.augmentation.reverse);
  EXPECT_TRUE(m.train.augmentation.time_shift);
  EXPECT_EQ(m.train.augmentation.max_shift_fraction, 0.2);
}

TEST(Manifest, RequiredKeys) {
  EXPECT_THROW(ExperimentManifest::parse(R"({"arch": "a", "train": {"epochs": 1, "lambda": 0.5, "tau": 0.1}})"),
               std::invalid_argument);
  for (const char* missing : {"epochs", "lambda", "tau"}) {
    auto j = nlohmann::json::parse(kMinimal);
    j["train"].erase(missing);
    EXPECT_THROW(ExperimentManifest::parse(j.dump()), std::invalid_argument) << missing;
  }
}

TEST(Manifest, RejectsUnknownKeysAndBadValues) {
  auto bad = [](const std::string& patch) {
    auto j = nlohmann::json::parse(kMinimal);
    j.merge_patch(nlohmann::json::parse(patch));
    return j.dump();
  };
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"learning_rate": 1})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"train": {"lamda": 1}})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"train": {"augmentation": {"flip": true}}})")),
               std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"train": {"epochs": "three"}})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"train": {"lambda": 1.5}})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"train": {"drop_epoch": 4}})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"fraction": 0})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"folds": 1})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse(bad(R"({"fold_mode": "patient"})")), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse("[1, 2]"), std::invalid_argument);
  EXPECT_THROW(ExperimentManifest::parse("{"), std::invalid_argument);
}

TEST(Manifest, CanonicalFormIsStable) {
  const auto a = ExperimentManifest::parse(kMinimal);
  // Same content, different key order and explicit defaults.
  const auto b = ExperimentManifest::parse(
      R"({"train": {"tau": 0.5, "batch_size": 64, "lambda": 0.2, "epochs": 3}, "arch": "a.arch", "data": "d.cds",
          "folds": 10})");
  EXPECT_EQ(a.canonical(), b.canonical());
  const auto round = ExperimentManifest::parse(a.canonical());
  EXPECT_EQ(round.canonical(), a.canonical());
  const auto j = nlohmann::json::parse(a.canonical());
  EXPECT_EQ(j["train"]["lr_initial"], 0.005);
  EXPECT_EQ(j["fold_mode"], "segment");
}

TEST(Manifest, ConfigHash) {
  const auto a = ExperimentManifest::parse(kMinimal);
  const auto h = config_hash(a, "k = 4\n");
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(config_hash(a, "k = 4\n"), h);
  EXPECT_NE(config_hash(a, "k = 5\n"), h);
  auto b = a;
  b.train.loss.tau = 0.4;
  EXPECT_NE(config_hash(b, "k = 4\n"), h);
  EXPECT_EQ(h, [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(a.canonical() + '\n' + "k = 4\n")));
    return std::string(buf);
  }());
}

TEST(Manifest, LoadReportsMissingFile) {
  EXPECT_THROW(ExperimentManifest::load("/nonexistent/m.json"), DataError);
}
