#include <cstdlib>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using trackguard::testing::slurp;
using trackguard::testing::spit;
using trackguard::testing::TempDir;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + TRACKGUARD_CLI + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

nlohmann::json small_config() {
  return {
      {"seed", 11},
      {"generator", {{"anomaly_samples", 1200}}},
      {"dataset", {{"records_per_class", 5}, {"nominal_records", 5}, {"holdout_records", 2}}},
      {"preprocess", {{"window_len", 64}, {"stride", 32}}},
      {"train", {{"epochs", 4}, {"hidden", {16}}}},
      {"paths",
       {{"data_dir", "run/data"},
        {"model_path", "run/model.json"},
        {"calib_path", "run/calibration.json"},
        {"report_dir", "run/report"}}}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { spit(dir_ / "cfg.json", small_config().dump(2)); }
  std::string cfg() const { return "--config \"" + (dir_ / "cfg.json").string() + "\""; }
  TempDir dir_;
};

TEST_F(Cli, FullPipelineSmoke) {
  auto r = run(dir_, "generate " + cfg());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "data" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "data" / "nominal_r000.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "data" / "anomaly06_r001.csv"));

  r = run(dir_, "train " + cfg());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = slurp(dir_ / "run" / "model_training_log.csv");
  EXPECT_EQ(log.rfind("epoch,train_loss,holdout_accuracy\n", 0), 0u);
  const auto model = nlohmann::json::parse(slurp(dir_ / "run" / "model.json"));
  EXPECT_EQ(model.at("version"), 1);

  r = run(dir_, "calibrate " + cfg());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "calibration.json"));

  r = run(dir_, "evaluate " + cfg());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy="), std::string::npos) << r.out;
  for (const char* f : {"summary.txt", "confusion.csv", "confusion_normalized.csv", "coverage.csv",
                        "earliness.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / "report" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir_ / "run" / "report" / ".trackguard.lock"));

  r = run(dir_, "predict " + cfg() + " \"" + (dir_ / "run" / "data" / "nominal_r000.csv").string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("# classes=nominal;1;2;3;4;5;7;8;9;10;11\nstart_index,prediction_set,probabilities\n", 0), 0u)
      << r.out.substr(0, 200);
  EXPECT_NE(r.out.find("# summary windows="), std::string::npos);
  EXPECT_NE(r.out.find("\n0,"), std::string::npos);

  r = run(dir_, "predict " + cfg() + " \"" + (dir_ / "run" / "data" / "anomaly06_r000.csv").string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("empty_fraction="), std::string::npos);
}

TEST_F(Cli, SeedOverrideChangesData) {
  ASSERT_EQ(run(dir_, "generate " + cfg()).code, 0);
  const auto a = slurp(dir_ / "run" / "data" / "anomaly03_r000.csv");
  ASSERT_EQ(run(dir_, "generate " + cfg() + " --seed 12").code, 0);
  const auto b = slurp(dir_ / "run" / "data" / "anomaly03_r000.csv");
  ASSERT_EQ(run(dir_, "generate " + cfg()).code, 0);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, slurp(dir_ / "run" / "data" / "anomaly03_r000.csv"));
}

TEST_F(Cli, VerbosePrintsEffectiveConfig) {
  const auto r = run(dir_, "generate " + cfg() + " --verbose");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("\"records_per_class\": 5"), std::string::npos) << r.err;
}

TEST_F(Cli, ConfigErrorExitCode) {
  auto doc = small_config();
  doc["bogus"] = true;
  spit(dir_ / "cfg.json", doc.dump());
  const auto r = run(dir_, "generate " + cfg());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos) << r.err;
  EXPECT_EQ(run(dir_, "generate").code, 2);
}

TEST_F(Cli, MissingFilesExitCode) {
  EXPECT_EQ(run(dir_, "generate --config \"" + (dir_ / "absent.json").string() + "\"").code, 3);
  EXPECT_EQ(run(dir_, "calibrate " + cfg()).code, 3);
}

TEST_F(Cli, MalformedCsvExitCode) {
  ASSERT_EQ(run(dir_, "generate " + cfg()).code, 0);
  ASSERT_EQ(run(dir_, "train " + cfg()).code, 0);
  ASSERT_EQ(run(dir_, "calibrate " + cfg()).code, 0);
  spit(dir_ / "bad.csv", "# trackguard-csv v1\nlabel=nominal;sample_rate=50;seed=1\nindex,cat,cal\n0,1.0\n");
  const auto r = run(dir_, "predict " + cfg() + " \"" + (dir_ / "bad.csv").string() + "\"");
  EXPECT_EQ(r.code, 4) << r.err;
}

TEST_F(Cli, ExistingLockBlocksRun) {
  fs::create_directories(dir_ / "run" / "data");
  spit(dir_ / "run" / "data" / ".trackguard.lock", "");
  const auto r = run(dir_, "generate " + cfg());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("locked"), std::string::npos) << r.err;
}

}  // namespace
