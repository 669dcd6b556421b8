// End-to-end tests that drive the emgcnn executable.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "emg/csv.hpp"
#include "emg/dataset.hpp"
#include "emg/metrics.hpp"
#include "emg/seeding.hpp"
#include "tempdir.hpp"

using namespace emg;
using emg::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

/// Runs `emgcnn <args>`, capturing stdout and stderr together.
Result run(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string("\"") + EMGCNN_EXE + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double summary_value(const fs::path& summary, const std::string& key) {
  for (const auto& line : csv::read_lines(summary.string())) {
    const auto cells = csv::split(line);
    if (cells.size() >= 2 && cells[0] == key)
      return std::stod(std::string(cells[1]));
  }
  ADD_FAILURE() << key << " not found in " << summary;
  return NAN;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : csv::read_lines(p.string())) {
    const auto cells = csv::split(line);
    rows.emplace_back(cells.begin(), cells.end());
  }
  return rows;
}

/// Synthetic config; `extra` is spliced into the JSON object.
std::string synthetic_config(std::uint64_t seed, int epochs, const std::string& extra = "") {
  return "{\"seed\": " + std::to_string(seed) + ", \"synthetic\": {\"n_per_class\": 30, \"length\": 512}," +
         " \"training\": {\"epochs\": " + std::to_string(epochs) + "}" + extra + "}";
}

const char* kClassNames[] = {"cyl", "tip", "lat", "hook", "palm", "spher"};

void write_class_matrices(const fs::path& dir, std::size_t trials, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (const char* name : kClassNames)
    for (int ch = 1; ch <= 2; ++ch) {
      std::string text;
      for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t n = 0; n < samples; ++n)
          text += (n ? "," : "") + csv::format_double(g(rng));
        text += "\n";
      }
      write_text(dir / (std::string(name) + "_ch" + std::to_string(ch) + ".csv"), text);
    }
}

} // namespace

// One full-protocol training run shared by the tests below.
class TrainedRun : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<TempDir>();
    write_text(*dir_ / "run.json", synthetic_config(5, 300, ", \"out\": \"run\""));
    train_ = run("train --config " + q(*dir_ / "run.json") + " --progress 0", dir_->path());
    synth_ = run("synth --out " + q(*dir_ / "data") + " --seed " + std::to_string(derive_seed(5, "synthetic")),
                 dir_->path());
  }
  static void TearDownTestSuite() { dir_.reset(); }

  static fs::path out() { return *dir_ / "run"; }
  static fs::path data() { return *dir_ / "data"; }

  static std::unique_ptr<TempDir> dir_;
  static Result train_;
  static Result synth_;
};
std::unique_ptr<TempDir> TrainedRun::dir_;
Result TrainedRun::train_;
Result TrainedRun::synth_;

TEST_F(TrainedRun, TrainSucceedsAndWritesEveryArtifact) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  for (const char* f : {"epochs.csv", "confusion.csv", "summary.csv", "model.bin", "normalizer.csv", "split.csv",
                        "config.echo", "confusion_max.csv", "report.txt"})
    EXPECT_TRUE(fs::exists(out() / f)) << f;
  EXPECT_EQ(csv::read_lines((out() / "epochs.csv").string()).size(), 301u);
}

TEST_F(TrainedRun, SeparableSyntheticDataReachesHighAccuracy) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  EXPECT_GE(summary_value(out() / "summary.csv", "model_accuracy"), 0.95);
  EXPECT_EQ(summary_value(out() / "summary.csv", "samples"), 54.0);
}

TEST_F(TrainedRun, ConfusionRowsSumToPerClassTestCounts) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  std::array<std::size_t, kNumClasses> test_counts{};
  const auto split = csv_rows(out() / "split.csv");
  ASSERT_EQ(split.size(), 181u);
  for (std::size_t i = 1; i < split.size(); ++i)
    if (split[i][3] == "test")
      ++test_counts[index_of(*parse_label(split[i][2]))];
  for (const char* name : {"confusion.csv", "confusion_max.csv"}) {
    const auto cm = metrics::read_confusion_csv((out() / name).string());
    for (std::size_t c = 0; c < kNumClasses; ++c)
      EXPECT_EQ(cm.row_sum(c), test_counts[c]) << name << " class " << kLabelChars[c];
  }
  for (auto n : test_counts)
    EXPECT_EQ(n, 9u);
}

TEST_F(TrainedRun, EvalOnTrainingPartMatchesRecordedTrainAccuracy) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  ASSERT_EQ(synth_.code, 0) << synth_.output;
  const auto r = run("eval --model " + q(out() / "model.bin") + " --data " + q(data()) + " --split " +
                         q(out() / "split.csv") + " --part train --out " + q(*dir_ / "eval_train"),
                     dir_->path());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto epochs = metrics::read_epochs_csv((out() / "epochs.csv").string());
  EXPECT_GE(summary_value(*dir_ / "eval_train" / "summary.csv", "accuracy"), epochs.back().train_acc - 1e-9);
  EXPECT_EQ(summary_value(*dir_ / "eval_train" / "summary.csv", "samples"), 126.0);
}

TEST_F(TrainedRun, EvalOnTestPartReproducesTheFinalConfusion) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  const auto r = run("eval --model " + q(out() / "model.bin") + " --data " + q(data()) + " --split " +
                         q(out() / "split.csv") + " --part test --out " + q(*dir_ / "eval_test"),
                     dir_->path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(*dir_ / "eval_test" / "confusion.csv"), slurp(out() / "confusion.csv"));
}

TEST_F(TrainedRun, PredictPrintsAProbabilityRow) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  const auto d = load_dataset(data());
  const auto r = run("predict --model " + q(out() / "model.bin") + " --record " + q(data() / d.records[0].file),
                     dir_->path());
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream lines(r.output);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header, "label,p_C,p_T,p_L,p_H,p_P,p_S");
  const auto cells = csv::split(row);
  ASSERT_EQ(cells.size(), 7u);
  EXPECT_TRUE(parse_label(cells[0]).has_value());
  double sum = 0.0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    sum += std::stod(std::string(cells[i]));
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST_F(TrainedRun, PredictOnMissingRecordFails) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  const auto r = run("predict --model " + q(out() / "model.bin") + " --record " + q(*dir_ / "nope.csv"),
                     dir_->path());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("nope.csv"), std::string::npos) << r.output;
}

TEST_F(TrainedRun, EvalRejectsAnUnknownLabel) {
  ASSERT_EQ(synth_.code, 0) << synth_.output;
  const auto bad = *dir_ / "badlabel";
  fs::create_directories(bad);
  auto manifest = slurp(data() / "manifest.csv");
  const auto pos = manifest.find(",C,");
  manifest.replace(pos, 3, ",X,");
  write_text(bad / "manifest.csv", manifest);
  for (const auto& e : fs::directory_iterator(data()))
    if (e.path().filename() != "manifest.csv")
      fs::copy_file(e.path(), bad / e.path().filename());
  const auto r = run("eval --model " + q(out() / "model.bin") + " --data " + q(bad), dir_->path());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("'X'"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("manifest.csv:2"), std::string::npos) << r.output;
}

TEST(Cli, RepeatedRunsGiveByteIdenticalSummaries) {
  TempDir dir;
  write_text(dir / "run.json", synthetic_config(21, 20));
  const auto a = run("train --config " + q(dir / "run.json") + " --out " + q(dir / "a"), dir.path());
  const auto b = run("train --config " + q(dir / "run.json") + " --out " + q(dir / "b"), dir.path());
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(b.code, 0) << b.output;
  for (const char* f : {"summary.csv", "epochs.csv", "confusion.csv", "split.csv", "model.bin", "normalizer.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(Cli, SeedFlagOverridesTheConfig) {
  TempDir dir;
  write_text(dir / "run.json", synthetic_config(21, 2));
  const auto a = run("train --config " + q(dir / "run.json") + " --out " + q(dir / "a"), dir.path());
  const auto b = run("train --config " + q(dir / "run.json") + " --seed 22 --out " + q(dir / "b"), dir.path());
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_NE(slurp(dir / "a" / "split.csv"), slurp(dir / "b" / "split.csv"));
  EXPECT_NE(slurp(dir / "b" / "config.echo").find("\"seed\": 22"), std::string::npos);
}

TEST(Cli, ConfigEchoReproducesTheRun) {
  TempDir dir;
  write_text(dir / "run.json", synthetic_config(23, 3));
  const auto a = run("train --config " + q(dir / "run.json") + " --out " + q(dir / "a"), dir.path());
  ASSERT_EQ(a.code, 0) << a.output;
  const auto b = run("train --config " + q(dir / "a" / "config.echo") + " --out " + q(dir / "b"), dir.path());
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_EQ(slurp(dir / "a" / "summary.csv"), slurp(dir / "b" / "summary.csv"));
}

TEST(Cli, UsageAndConfigErrorsExitOne) {
  TempDir dir;
  EXPECT_EQ(run("", dir.path()).code, 1);
  EXPECT_EQ(run("frobnicate", dir.path()).code, 1);
  EXPECT_EQ(run("train", dir.path()).code, 1);
  EXPECT_EQ(run("train --config " + q(dir / "missing.json"), dir.path()).code, 1);

  write_text(dir / "typo.json", R"({"seed": 1, "synthetic": {}, "trainig": {}})");
  auto r = run("train --config " + q(dir / "typo.json"), dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("trainig"), std::string::npos) << r.output;

  write_text(dir / "noseed.json", R"({"synthetic": {}})");
  r = run("train --config " + q(dir / "noseed.json"), dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("seed"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir;
  fs::create_directories(dir / "empty");
  write_text(dir / "empty.json", R"({"seed": 1, "dataset": "empty"})");
  auto r = run("train --config " + q(dir / "empty.json"), dir.path());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("no records found"), std::string::npos) << r.output;

  r = run("validate " + q(dir / "empty"), dir.path());
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, DivergenceExitsThree) {
  TempDir dir;
  write_text(dir / "run.json", R"({"seed": 3, "synthetic": {"n_per_class": 6, "length": 256},
                                   "training": {"epochs": 5, "learning_rate": 1e200}})");
  const auto r = run("train --config " + q(dir / "run.json") + " --out " + q(dir / "run"), dir.path());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("diverged at epoch"), std::string::npos) << r.output;
}

TEST(Cli, ConvertBuildsTheRecordLayout) {
  TempDir dir;
  for (int s = 1; s <= 5; ++s)
    write_class_matrices(dir / "export" / ("subject" + std::to_string(s)), 30, 256, static_cast<std::uint64_t>(s));
  auto r = run("convert " + q(dir / "export") + " --out " + q(dir / "db"), dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(csv::read_lines((dir / "db" / "manifest.csv").string()).size(), 901u);

  r = run("validate " + q(dir / "db"), dir.path());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("900 records"), std::string::npos) << r.output;

  const auto before = slurp(dir / "db" / "manifest.csv");
  r = run("convert " + q(dir / "export") + " --out " + q(dir / "db"), dir.path());
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_EQ(slurp(dir / "db" / "manifest.csv"), before);

  // One subject trains on 126 records and tests on 54.
  write_text(dir / "run.json", R"({"seed": 4, "dataset": "db", "training": {"epochs": 1}})");
  r = run("train --config " + q(dir / "run.json") + " --subset subject=subject3 --out " + q(dir / "s3"),
          dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto split = csv_rows(dir / "s3" / "split.csv");
  std::size_t train = 0, test = 0;
  for (std::size_t i = 1; i < split.size(); ++i)
    (split[i][3] == "train" ? train : test) += 1;
  EXPECT_EQ(train, 126u);
  EXPECT_EQ(test, 54u);
}

TEST(Cli, ConvertNamesTheMissingIndexColumn) {
  TempDir dir;
  write_class_matrices(dir / "export", 2, 16, 1);
  write_text(dir / "export" / "index.csv", "file,label,subject,session\ncyl_ch1.csv,C,1,1\n");
  const auto r = run("convert " + q(dir / "export") + " --out " + q(dir / "db"), dir.path());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("'channel'"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "db" / "manifest.csv"));
}

TEST(Cli, ExtractWritesOneRowPerRecord) {
  TempDir dir;
  auto r = run("synth --out " + q(dir / "data") + " --per-class 3 --length 256", dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("extract --data " + q(dir / "data") + " --out " + q(dir / "feat"), dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(csv::read_lines((dir / "feat" / "features.csv").string()).size(), 19u);
}
