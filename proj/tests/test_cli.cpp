#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "concad/cli.hpp"

namespace fs = std::filesystem;
using concad::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// A synthetic dataset, a small architecture and a two-epoch manifest.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "concad_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const auto r = cli({"synthesize", "--out", (dir_ / "data.cds").string(), "--records", "2",
                        "--epochs-per-record", "8", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ofstream(dir_ / "small.arch") << "ecg = ConvBlock(4,50,10)-MaxPool(2)-ConvBlock(4,8,4)\n"
                                          "rri = ConvBlock(4,8,4)-MaxPool(2)-ConvBlock(4,4,2)\n"
                                          "rpe = ConvBlock(4,8,4)-MaxPool(2)-ConvBlock(4,4,2)\n"
                                          "k = 6\nproj_dim = 4\nclf_hidden = 4\n";
    std::ofstream(dir_ / "m.json") << R"({"data": "data.cds", "arch": "small.arch", "folds": 2,
      "train": {"epochs": 2, "drop_epoch": 1, "batch_size": 8, "lambda": 0.5, "tau": 0.1, "seed": 4}})";
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path dir_;
};

fs::path CliRun::dir_;

}  // namespace

TEST(Cli, GradcheckPasses) {
  const auto r = cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"train"}).code, 1);
  EXPECT_EQ(cli({"train", "--manifest", "/nonexistent.json", "--out", "/tmp/x"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, DataErrorExitCode) {
  const auto bad = fs::temp_directory_path() / "concad_cli_bad.cds";
  std::ofstream(bad) << "not a dataset";
  const auto ck = fs::temp_directory_path() / "concad_cli_bad.ckpt";
  std::ofstream(ck) << "not a checkpoint";
  EXPECT_EQ(cli({"eval", "--checkpoint", ck.string(), "--data", bad.string()}).code, 2);
  fs::remove(bad);
  fs::remove(ck);
}

TEST_F(CliRun, TrainTwiceIsByteIdentical) {
  const auto a = cli({"train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "a").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = cli({"train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "b").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto ma = slurp(dir_ / "a" / "metrics.json");
  EXPECT_FALSE(ma.empty());
  EXPECT_EQ(ma, slurp(dir_ / "b" / "metrics.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "final.ckpt"), slurp(dir_ / "b" / "final.ckpt"));
  for (const char* f : {"epochs.csv", "best.ckpt", "manifest.json"}) EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;

  const auto j = nlohmann::json::parse(ma);
  EXPECT_EQ(j["command"], "train");
  EXPECT_EQ(j["epochs"].size(), 2u);
  EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);

  const auto c = cli({"train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "c").string(), "--seed",
                      "5"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(slurp(dir_ / "c" / "metrics.json"), ma);
}

TEST_F(CliRun, EvalMatchesTrainingReport) {
  const auto t = cli({"train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "e").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto trained = nlohmann::json::parse(slurp(dir_ / "e" / "metrics.json"));
  const auto r = cli({"eval", "--checkpoint", (dir_ / "e" / "final.ckpt").string(), "--data",
                      (dir_ / "data.cds").string(), "--out", (dir_ / "e" / "eval.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "e" / "eval.json"));
  EXPECT_EQ(j["metrics"]["accuracy"], trained["final"]["accuracy"]);
  EXPECT_EQ(j["metrics"]["n_eval"], 16);
  EXPECT_EQ(j["checkpoint"]["config_hash"], trained["config_hash"]);
}

TEST_F(CliRun, ExportEmbeddings) {
  const auto t = cli({"train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "x").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto r = cli({"export-embeddings", "--checkpoint", (dir_ / "x" / "best.ckpt").string(), "--data",
                      (dir_ / "data.cds").string(), "--out", (dir_ / "x" / "emb.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(dir_ / "x" / "emb.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 17);
}

TEST_F(CliRun, CrossvalAndSubset) {
  const auto cv = cli({"crossval", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "cv").string()});
  ASSERT_EQ(cv.code, 0) << cv.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "cv" / "metrics.json"));
  ASSERT_EQ(j["folds"].size(), 2u);
  EXPECT_EQ(j["folds"][0]["eval_size"].get<int>() + j["folds"][1]["eval_size"].get<int>(), 16);

  const auto st = cli({"subset-train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "st").string(),
                       "--fraction", "0.5"});
  ASSERT_EQ(st.code, 0) << st.err;
  const auto s = nlohmann::json::parse(slurp(dir_ / "st" / "metrics.json"));
  EXPECT_EQ(s["train_size"].get<int>() + s["eval_size"].get<int>(), 16);
  EXPECT_EQ(s["evaluated_on"], "held_out_remainder");

  EXPECT_EQ(cli({"subset-train", "--manifest", (dir_ / "m.json").string(), "--out", (dir_ / "st").string(),
                 "--fraction", "1.5"})
                .code,
            1);
}
