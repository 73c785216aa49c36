#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "dynfire/checkpoint.hpp"
#include "dynfire/config.hpp"
#include "dynfire/gridstack.hpp"

using namespace dynfire;
namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / "dynfire_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

int run(const std::string& args) {
  const std::string cmd = std::string(DYNFIRE_CLI_PATH) + " " + args + " >" + (work() / "stdout.txt").string() +
                          " 2>" + (work() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string at(const std::string& name) { return (work() / name).string(); }

const std::string kSmallModel = " --state 8 --feature 8 --conv1 3 --conv2 4 --batch_windows 2 --window_steps 4";

// Synthetic 8x8 data split into train/validation, built once.
void ensure_data() {
  static bool done = false;
  if (done) return;
  ASSERT_EQ(run("synth --out " + at("data") + " --weeks 60 --height 8 --width 8 --seed 3 --window_steps 4"), 0);
  ASSERT_EQ(run("split --out " + at("split") + " --obs " + at("data/obs.gstk") + " --fire " + at("data/fire.gstk")), 0);
  done = true;
}

std::string train_args(const std::string& variant, const std::string& out, int iterations) {
  return "train --out " + at(out) + " --obs " + at("split/train_obs.gstk") + " --fire " + at("split/train_fire.gstk") +
         " --variant " + variant + " --iterations " + std::to_string(iterations) + kSmallModel;
}

std::string val_args() {
  return " --val_obs " + at("split/val_obs.gstk") + " --val_fire " + at("split/val_fire.gstk") + " --train_obs " +
         at("split/train_obs.gstk");
}

}  // namespace

TEST(CliSynth, DefaultRunWritesValidStacksAndSnapshot) {
  ASSERT_EQ(run("synth --out " + at("synth_default") + " --weeks 40"), 0);
  const GridStack obs = read_stack(work() / "synth_default/obs.gstk");
  const GridStack fire = read_stack(work() / "synth_default/fire.gstk");
  EXPECT_EQ(obs.frames(), 40u);
  EXPECT_EQ(obs.header.channels, 5u);
  EXPECT_EQ(fire.header.channels, 1u);
  const KeyValues snap = read_key_values(work() / "synth_default/resolved_config.txt");
  EXPECT_EQ(snap.at("command"), "synth");
  EXPECT_EQ(snap.at("weeks"), "40");
}

TEST(CliSynth, SameSeedGivesByteIdenticalFiles) {
  ASSERT_EQ(run("synth --out " + at("seed_a") + " --weeks 40 --seed 7"), 0);
  ASSERT_EQ(run("synth --out " + at("seed_b") + " --weeks 40 --seed 7"), 0);
  EXPECT_EQ(slurp(work() / "seed_a/obs.gstk"), slurp(work() / "seed_b/obs.gstk"));
  EXPECT_EQ(slurp(work() / "seed_a/fire.gstk"), slurp(work() / "seed_b/fire.gstk"));
}

TEST(CliSynth, MinimumLengthBoundary) {
  // K=12, T=4: 26 weeks is the least accepted length.
  EXPECT_EQ(run("synth --out " + at("w30") + " --weeks 30"), 0);
  EXPECT_EQ(run("synth --out " + at("w26") + " --weeks 26"), 0);
  EXPECT_EQ(run("synth --out " + at("w25") + " --weeks 25"), 2);
}

TEST(CliSynth, ConfigFileAndFlagPrecedence) {
  {
    std::ofstream cfg(work() / "synth.cfg");
    cfg << "weeks = 35\nseed = 4\n";
  }
  ASSERT_EQ(run("synth --config " + at("synth.cfg") + " --out " + at("cfg_a") + " --seed 5"), 0);
  const KeyValues snap = read_key_values(work() / "cfg_a/resolved_config.txt");
  EXPECT_EQ(snap.at("weeks"), "35");
  EXPECT_EQ(snap.at("seed"), "5");
  EXPECT_EQ(read_stack(work() / "cfg_a/obs.gstk").frames(), 35u);
  {
    std::ofstream bad(work() / "bad.cfg");
    bad << "wekks = 35\n";
  }
  EXPECT_EQ(run("synth --config " + at("bad.cfg") + " --out " + at("cfg_b")), 2);
}

TEST(CliTrain, StaticCheckpointHasNoObservationDecoder) {
  ensure_data();
  ASSERT_EQ(run(train_args("static_generative", "t_static", 2)), 0);
  const CheckpointInfo info = read_checkpoint_info(work() / "t_static/model.dfck");
  bool any_fire = false;
  for (const auto& name : info.param_names) {
    EXPECT_NE(name.rfind("decoder_obs.", 0), 0u) << name;
    EXPECT_NE(name.rfind("rnn.", 0), 0u) << name;
    any_fire = any_fire || name.rfind("decoder_fire.", 0) == 0;
  }
  EXPECT_TRUE(any_fire);
}

TEST(CliTrain, ZeroIterationsCheckpointEqualsInitialization) {
  ensure_data();
  ASSERT_EQ(run(train_args("dynamic_autoenc", "t_zero", 0) + " --seed 9"), 0);
  const Model m = load_model(work() / "t_zero/model.dfck");
  EXPECT_EQ(m.params(), init_params(Variant::dynamic_autoenc, m.dims(), derive_seed(9, 0)));
  std::istringstream csv(slurp(work() / "t_zero/metrics.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 1);  // header only
}

TEST(CliTrain, MetricsRowsEqualIterationsAndRerunFromSnapshotIsIdentical) {
  ensure_data();
  ASSERT_EQ(run(train_args("dynamic_autoenc", "t_five", 5)), 0);
  std::istringstream csv(slurp(work() / "t_five/metrics.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 5);
  ASSERT_EQ(run("train --config " + at("t_five/resolved_config.txt") + " --out " + at("t_five_again")), 0);
  EXPECT_EQ(slurp(work() / "t_five/model.dfck"), slurp(work() / "t_five_again/model.dfck"));
  EXPECT_EQ(slurp(work() / "t_five/metrics.csv"), slurp(work() / "t_five_again/metrics.csv"));
}

TEST(CliTrain, DimsMismatchIsConfigErrorBeforeCompute) {
  ensure_data();
  EXPECT_EQ(run(train_args("dynamic_autoenc", "t_bad", 5) + " --height 9"), 2);
  EXPECT_FALSE(fs::exists(work() / "t_bad/metrics.csv"));
}

TEST(CliEvaluate, RepeatedEvaluationGivesIdenticalCsvs) {
  ensure_data();
  ASSERT_EQ(run(train_args("dynamic_autoenc", "t_eval", 3)), 0);
  const std::string ck = " --checkpoint " + at("t_eval/model.dfck");
  ASSERT_EQ(run("evaluate --out " + at("e1") + ck + val_args()), 0);
  ASSERT_EQ(run("evaluate --out " + at("e2") + ck + val_args()), 0);
  EXPECT_EQ(slurp(work() / "e1/report.csv"), slurp(work() / "e2/report.csv"));
  EXPECT_EQ(slurp(work() / "e1/frames.csv"), slurp(work() / "e2/frames.csv"));
  const std::string report = slurp(work() / "e1/report.csv");
  EXPECT_EQ(report.substr(0, report.find('\n')),
            "variant,frames,total_bce,mean_pixel_bce,auroc,positive_rate,best_flag");
}

TEST(CliEvaluate, PngEmissionWritesOneFilePerWeek) {
  ensure_data();
  ASSERT_EQ(run(train_args("gru_baseline", "t_png", 1)), 0);
  ASSERT_EQ(run("evaluate --out " + at("e_png") + " --checkpoint " + at("t_png/model.dfck") + val_args() +
                " --png_dir maps"),
            0);
  const std::size_t frames = read_stack(work() / "split/val_obs.gstk").frames();
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(work() / "e_png/maps")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, frames);
}

TEST(CliEvaluate, MissingCheckpointAndCarriedWithoutTrainingStackAreConfigErrors) {
  ensure_data();
  EXPECT_EQ(run("evaluate --out " + at("e_missing") + " --checkpoint " + at("nope.dfck") + val_args()), 2);
  ASSERT_EQ(run(train_args("dynamic_autoenc", "t_warm", 1)), 0);
  EXPECT_EQ(run("evaluate --out " + at("e_warm") + " --checkpoint " + at("t_warm/model.dfck") + " --val_obs " +
                at("split/val_obs.gstk")),
            2);
  EXPECT_EQ(run("evaluate --out " + at("e_cold") + " --checkpoint " + at("t_warm/model.dfck") + " --val_obs " +
                at("split/val_obs.gstk") + " --warm cold"),
            0);
}

TEST(CliCompare, ThreeVariantsGiveExactlyOneBestFlag) {
  ensure_data();
  std::string list;
  for (const std::string v : {"dynamic_autoenc", "gru_baseline", "static_generative"}) {
    ASSERT_EQ(run(train_args(v, "c_" + v, 2)), 0);
    list += (list.empty() ? "" : ",") + at("c_" + v + "/model.dfck");
  }
  ASSERT_EQ(run("compare --out " + at("cmp") + " --checkpoints " + list + val_args()), 0);
  std::istringstream csv(slurp(work() / "cmp/comparison.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0, best = 0;
  while (std::getline(csv, line)) {
    ++rows;
    best += line.back() == '1';
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(best, 1);
}

TEST(CliPredict, DefaultHorizonIsFourWeeksAfterTheLastFrame) {
  ensure_data();
  ASSERT_EQ(run(train_args("dynamic_autoenc", "t_pred", 1)), 0);
  const GridStack val = read_stack(work() / "split/val_obs.gstk");
  ASSERT_EQ(run("predict --out " + at("p") + " --checkpoint " + at("t_pred/model.dfck") + " --obs " +
                at("split/val_obs.gstk") + " --train_obs " + at("split/train_obs.gstk")),
            0);
  const std::string stem = "risk_week_" + std::to_string(val.week_of(val.frames() - 1) + 4);
  EXPECT_TRUE(fs::exists(work() / "p" / (stem + ".png")));
  EXPECT_TRUE(fs::exists(work() / "p" / (stem + ".csv")));
  EXPECT_EQ(run("predict --out " + at("p2") + " --checkpoint " + at("t_pred/model.dfck") + " --obs " +
                at("split/val_obs.gstk") + " --warm cold --horizon 3"),
            2);
}

TEST(CliExitCodes, DistinctCodesPerErrorClass) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("synth --out " + at("x") + " --weeks many"), 2);
  {
    std::ofstream junk(work() / "junk.gstk", std::ios::binary);
    junk << "not a stack";
  }
  EXPECT_EQ(run("split --out " + at("x2") + " --obs " + at("junk.gstk")), 3);
}

TEST(CliOutputRoot, RelativeOutputResolvesAgainstEnvironmentRoot) {
  const fs::path root = work() / "root";
  fs::create_directories(root);
  const std::string cmd = "DYNFIRE_OUTPUT_ROOT=" + root.string() + " " + DYNFIRE_CLI_PATH +
                          " synth --out rel --weeks 30 >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(root / "rel/obs.gstk"));
}
