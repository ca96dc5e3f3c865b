#include "aura/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace aura;
namespace fs = io::fs;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("aurasense_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path at(const std::string& rel) { return work_dir() / rel; }

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + AURASENSE_CLI + "\" " + args + " >>\"" + at("log.txt").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Small dataset and SVM model shared by the tests.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    io::write_text(at("sim.cfg"), "scenario = static_robot_moving_object\ntrials = 12\n");
    ASSERT_EQ(cli("simulate --config " + q(at("sim.cfg")) + " --seed 2 --out " + q(at("data"))), 0);
    ASSERT_EQ(cli("train --classifier svm --dataset " + q(at("data")) + " --out " + q(at("svm"))), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(work_dir()); }
};

}  // namespace

TEST_F(CliTest, SimulateWritesManifestAndSnapshot) {
  const auto manifest = io::Json::parse(io::read_text(at("data/manifest.json")));
  EXPECT_EQ(manifest["positives"], 12);
  EXPECT_EQ(manifest["negatives"], 12);
  for (const auto& t : manifest["trials"]) EXPECT_TRUE(fs::exists(at("data") / t["audio"].get<std::string>()));
  const auto snapshot = io::read_text(at("data/config.snapshot"));
  EXPECT_NE(snapshot.find("seed = 2"), std::string::npos);
}

TEST_F(CliTest, NegativeOnlyListsNoPositives) {
  io::write_text(at("neg.cfg"), "scenario = negative_only\ntrials = 1\nnegative_trials = 3\n");
  ASSERT_EQ(cli("simulate --config " + q(at("neg.cfg")) + " --out " + q(at("neg"))), 0);
  const auto manifest = io::Json::parse(io::read_text(at("neg/manifest.json")));
  EXPECT_EQ(manifest["positives"], 0);
  EXPECT_EQ(manifest["negatives"], 3);
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  io::write_text(at("bad.cfg"), "trials = 3\nthis line is wrong\n");
  fs::remove(at("log.txt"));
  EXPECT_EQ(cli("simulate --config " + q(at("bad.cfg")) + " --out " + q(at("x1"))), 2);
  EXPECT_NE(io::read_text(at("log.txt")).find("bad.cfg:2:"), std::string::npos);
  io::write_text(at("typo.cfg"), "trails = 3\n");
  EXPECT_EQ(cli("simulate --config " + q(at("typo.cfg")) + " --out " + q(at("x2"))), 2);
  EXPECT_EQ(cli("simulate --config " + q(at("missing.cfg")) + " --out " + q(at("x3"))), 2);
  EXPECT_EQ(cli("no-such-command"), 2);
  EXPECT_FALSE(fs::exists(at("x1")));
  EXPECT_FALSE(fs::exists(at("x2")));
}

TEST_F(CliTest, MissingDatasetExitsTwo) {
  EXPECT_EQ(cli("train --dataset " + q(at("nowhere")) + " --out " + q(at("x4"))), 2);
}

TEST_F(CliTest, NonEmptyOutputNeedsOverwrite) {
  EXPECT_EQ(cli("simulate --config " + q(at("sim.cfg")) + " --seed 2 --out " + q(at("data"))), 2);
  fs::create_directories(at("empty"));
  EXPECT_EQ(cli("simulate --config " + q(at("sim.cfg")) + " --seed 2 --out " + q(at("empty"))), 0);
  EXPECT_EQ(cli("simulate --config " + q(at("sim.cfg")) + " --seed 2 --out " + q(at("empty")) + " --overwrite"), 0);
  EXPECT_EQ(io::file_checksum(at("empty/manifest.json")), io::file_checksum(at("data/manifest.json")));
}

TEST_F(CliTest, EnvironmentSetsDefaultOutputRoot) {
  const std::string cmd = "AURASENSE_OUT_ROOT=" + q(at("root")) + " \"" + AURASENSE_CLI + "\" simulate --config " +
                          q(at("sim.cfg")) + " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(at("root/simulate/manifest.json")));
}

TEST_F(CliTest, TrainWritesModelAndMetadata) {
  EXPECT_TRUE(fs::exists(at("svm/model.lswm")));
  const auto meta = io::Json::parse(io::read_text(at("svm/model.json")));
  EXPECT_EQ(meta["classifier"], "svm");
  EXPECT_EQ(meta["seed"], 1);
  const auto manifest_sum = io::file_checksum(at("data/manifest.json"));
  EXPECT_EQ(meta["datasets"][0]["fingerprint"], manifest_sum);
  EXPECT_EQ(meta["model_checksum"], io::file_checksum(at("svm/model.lswm")));
  EXPECT_EQ(io::read_text(at("svm/model.json")).find(work_dir().string()), std::string::npos);
}

TEST_F(CliTest, EvalOutputsAndGuards) {
  ASSERT_EQ(cli("eval --model " + q(at("svm/model.lswm")) + " --dataset " + q(at("data")) + " --out " + q(at("ev"))), 0);
  const auto summary = io::Json::parse(io::read_text(at("ev/summary.json")));
  EXPECT_TRUE(summary["static_object_tpr"].is_null());
  EXPECT_FALSE(summary["tnr"].is_null());

  // ROC rows: distinct trial scores plus two endpoints, plus the header.
  std::set<std::string> distinct;
  const auto scores = io::read_text(at("ev/scores.csv"));
  std::istringstream in(scores);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    distinct.insert(cells.at(4));
  }
  const auto roc = io::read_text(at("ev/roc.csv"));
  EXPECT_EQ(static_cast<std::size_t>(std::count(roc.begin(), roc.end(), '\n')), distinct.size() + 3);

  io::write_text(at("train_split.cfg"), "split = train\n");
  const std::string base = "eval --config " + q(at("train_split.cfg")) + " --model " + q(at("svm/model.lswm")) +
                           " --dataset " + q(at("data"));
  EXPECT_EQ(cli(base + " --out " + q(at("ev_train"))), 2);
  EXPECT_EQ(cli(base + " --allow-train-eval --out " + q(at("ev_train"))), 0);

  io::write_text(at("other.cfg"), "scenario = static_robot_moving_object\ntrials = 12\n");
  ASSERT_EQ(cli("simulate --config " + q(at("other.cfg")) + " --seed 9 --out " + q(at("other"))), 0);
  const std::string other = "eval --model " + q(at("svm/model.lswm")) + " --dataset " + q(at("other"));
  EXPECT_EQ(cli(other + " --out " + q(at("ev_other"))), 2);
  EXPECT_EQ(cli(other + " --force --out " + q(at("ev_other"))), 0);
}

TEST_F(CliTest, DetectWritesEventsAndRejectsSampleRate) {
  const auto manifest = io::Json::parse(io::read_text(at("data/manifest.json")));
  const auto audio = at("data") / manifest["trials"][0]["audio"].get<std::string>();
  ASSERT_EQ(cli("detect --model " + q(at("svm/model.lswm")) + " --input " + q(audio) + " --out " + q(at("det"))), 0);
  EXPECT_TRUE(fs::exists(at("det/events.jsonl")));
  EXPECT_TRUE(fs::exists(at("det/stop.txt")));
  const auto latency = io::Json::parse(io::read_text(at("det/latency.json")));
  EXPECT_GT(latency["samples_per_s"].get<double>(), 0.0);

  // Held-out trials at the eval-selected threshold: quiet negative, approach
  // stops within the pre-impact segment [1.0, 1.3] s.
  ASSERT_EQ(cli("eval --model " + q(at("svm/model.lswm")) + " --dataset " + q(at("data")) + " --out " + q(at("det_ev"))), 0);
  const auto threshold =
      io::format_double(io::Json::parse(io::read_text(at("det_ev/summary.json")))["threshold"].get<double>());
  std::string negative, positive;
  for (const auto& t : manifest["trials"]) {
    if (t["split"] != "test") continue;
    auto& slot = t["label"] == "positive" ? positive : negative;
    if (slot.empty()) slot = (at("data") / t["audio"].get<std::string>()).string();
  }
  ASSERT_FALSE(negative.empty());
  ASSERT_FALSE(positive.empty());
  ASSERT_EQ(cli("detect --model " + q(at("svm/model.lswm")) + " --input " + q(negative) + " --threshold " + threshold + " --out " + q(at("det_neg"))), 0);
  EXPECT_EQ(io::read_text(at("det_neg/stop.txt")), "");
  ASSERT_EQ(cli("detect --model " + q(at("svm/model.lswm")) + " --input " + q(positive) + " --threshold " + threshold + " --out " + q(at("det_pos"))), 0);
  bool in_segment = false;
  std::istringstream stops(io::read_text(at("det_pos/stop.txt")));
  for (std::string word, time; stops >> word >> time;) {
    EXPECT_EQ(word, "STOP");
    const double t = std::stod(time);
    in_segment = in_segment || (t >= 1.0 - 1e-9 && t <= 1.3 + 1e-9);
  }
  EXPECT_TRUE(in_segment);

  auto rec = io::read_audio(audio);
  rec.sample_rate_hz = 48000.0;
  io::write_wav(at("slow.wav"), rec);
  EXPECT_EQ(cli("detect --model " + q(at("svm/model.lswm")) + " --input " + q(at("slow.wav")) + " --out " +
                q(at("det48"))),
            2);
  EXPECT_EQ(cli("detect --model " + q(at("nope.lswm")) + " --input " + q(audio) + " --out " + q(at("det_x"))), 2);
}
