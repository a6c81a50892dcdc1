// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rsd/harness.h"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rsd/baselines.h"
#include "rsd/errors.h"
#include "test_util.h"

namespace rsd {
namespace {

namespace fs = std::filesystem;
using testing::RandomImage;
using testing::ScopedDir;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough to run every stage in a few seconds.
ExperimentConfig TinyConfig() {
  ExperimentConfig cfg;
  cfg.n_real = 16;
  cfg.n_fake = 16;
  cfg.image_size = 32;
  cfg.test_frac = 0.25;
  cfg.sr.n_blocks = 1;
  cfg.sr.base_channels = 8;
  cfg.sr.growth = 4;
  cfg.sr.block_layers = 2;
  cfg.resynth_train.epochs = 1;
  cfg.resynth_train.batch_size = 4;
  cfg.classifier_train.epochs = 2;
  cfg.classifier_train.batch_size = 8;
  cfg.baseline_train.epochs = 1;
  cfg.baseline_train.batch_size = 8;
  cfg.n_cams = 2;
  cfg.seed = 5;
  return cfg;
}

TEST(PseudoFakeTest, ConstantIsQuantizedFixedPoint) {
  const Image out = PseudoFake(Image(3, 16, 16, 0.4f));
  const float want = std::round(0.4f * 31) / 31;
  for (float v : out.values()) ASSERT_FLOAT_EQ(v, want);
  EXPECT_EQ(PseudoFake(Image(3, 8, 8, 1.0f)), Image(3, 8, 8, 1.0f));
}

TEST(PseudoFakeTest, NearestNeighbourBlocksThenFiveBits) {
  const Image in = RandomImage(3, 16, 12, 1);
  const Image out = PseudoFake(in);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 12; ++x) {
        const float src = in.at(c, y - y % 4, x - x % 4);
        ASSERT_FLOAT_EQ(out.at(c, y, x), std::round(src * 31) / 31);
      }
    }
  }
}

TEST(PseudoFakeTest, CheckerboardLosesHighFrequencies) {
  Image board(3, 32, 32);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) board.at(c, y, x) = (x + y) % 2 ? 0.8f : 0.2f;
    }
  }
  const auto before = Spectrum1dFeature(board);
  const auto after = Spectrum1dFeature(PseudoFake(board));
  double hi_before = 0, hi_after = 0;
  for (size_t r = before.size() / 2; r < before.size(); ++r) {
    hi_before += before[r];
    hi_after += after[r];
  }
  EXPECT_LT(hi_after, 0.1 * hi_before);
}

TEST(MakeToyFakesTest, PseudoFakeManifestIsDeterministic) {
  ScopedDir dir("fakes");
  Manifest reals;
  for (int i = 0; i < 3; ++i) {
    const fs::path p = dir.path() / ("r" + std::to_string(i) + ".png");
    SavePng(RandomImage(3, 16, 16, uint64_t(i)), p);
    reals.entries.push_back({p.string(), Label::kReal, "real"});
  }
  const Manifest a = MakeToyFakes(reals, FakeMode::kPseudoFake, {}, 1, dir.path() / "f");
  const std::string bytes = Slurp(dir.path() / "f" / "manifest.jsonl");
  const std::string img = Slurp(a.entries[0].path);
  const Manifest b = MakeToyFakes(reals, FakeMode::kPseudoFake, {}, 1, dir.path() / "f");
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(Slurp(dir.path() / "f" / "manifest.jsonl"), bytes);
  EXPECT_EQ(Slurp(b.entries[0].path), img);
  ASSERT_EQ(a.size(), 3u);
  for (const auto& e : a.entries) {
    EXPECT_EQ(e.label, Label::kFake);
    EXPECT_EQ(LoadImage(e.path).height(), 16);
  }
}

TEST(MakeToyFakesTest, TrainedGeneratorProduces64x64) {
  ScopedDir dir("gen");
  Manifest reals;
  for (int i = 0; i < 2; ++i) {
    const fs::path p = dir.path() / ("r" + std::to_string(i) + ".png");
    SavePng(SyntheticReal(64, uint64_t(i)), p);
    reals.entries.push_back({p.string(), Label::kReal, "real"});
  }
  GeneratorConfig gen;
  gen.z_dim = 8;
  gen.widths = {8, 8, 4, 4};
  gen.steps = 2;
  gen.batch_size = 2;
  const Manifest f = MakeToyFakes(reals, FakeMode::kTrainedGenerator, gen, 3,
                                  dir.path() / "f");
  ASSERT_EQ(f.size(), 2u);
  const Image img = LoadImage(f.entries[0].path);
  EXPECT_EQ(img.height(), 64);
  EXPECT_EQ(img.width(), 64);
  EXPECT_EQ(f.entries[0].source_tag, "trained_generator");
  EXPECT_TRUE(fs::exists(dir.path() / "f" / "generator.ckpt"));
}

TEST(MakeToyFakesTest, DivergedGeneratorFailsWithLog) {
  ScopedDir dir("nan");
  std::vector<Image> reals = {Image(3, 64, 64, std::numeric_limits<float>::quiet_NaN())};
  GeneratorConfig gen;
  gen.widths = {4, 4, 4, 4};
  gen.z_dim = 4;
  gen.steps = 3;
  gen.batch_size = 1;
  const fs::path log = dir.path() / "generator_log.jsonl";
  EXPECT_THROW(TrainGenerator(reals, gen, 1, log), TrainingDiverged);
  ASSERT_TRUE(fs::exists(log));
  // JSON has no NaN; the diverged loss is written as null.
  const std::string text = Slurp(log);
  const auto line = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(line.at("step"), 0);
  EXPECT_TRUE(line.at("d_loss").is_null());
}

TEST(AccuracyTest, Examples) {
  EXPECT_EQ(Accuracy({0.9, 0.1}, {Label::kFake, Label::kReal}, 0.5), 1.0);
  EXPECT_EQ(Accuracy({0.5, 0.5, 0.5, 0.5},
                     {Label::kFake, Label::kReal, Label::kFake, Label::kReal}, 0.5),
            0.5);
  // Hand count: decisions F R F R R F vs labels F F R R R F -> 4 of 6.
  EXPECT_DOUBLE_EQ(Accuracy({0.7, 0.2, 0.51, 0.5, 0.0, 1.0},
                            {Label::kFake, Label::kFake, Label::kReal, Label::kReal,
                             Label::kReal, Label::kFake},
                            0.5),
                   4.0 / 6.0);
  EXPECT_THROW(Accuracy({0.1}, {}, 0.5), ArgumentError);
}

TEST(ExperimentConfigTest, JsonRoundTrip) {
  ExperimentConfig cfg = TinyConfig();
  cfg.detectors = {"pix", "stage3", "fft_2d"};
  cfg.conditions = {Condition::kPerturb};
  cfg.omega.mode = OmegaMode::kSRC;
  cfg.perturb.jpeg_quality = 60;
  cfg.classifier_train.lr_schedule = {{3, 0.005}, {6, 0.0005}};
  const auto j = cfg.ToJson();
  const ExperimentConfig back = ExperimentConfig::FromJson(j);
  EXPECT_EQ(back.ToJson(), j);
  EXPECT_EQ(back.ResidualLevels(), (std::vector<int>{0, 3}));
  EXPECT_EQ(back.BaselineKinds(), std::vector<FeatureKind>{FeatureKind::kFft2d});
}

TEST(ExperimentConfigTest, Rejections) {
  auto j = nlohmann::json::parse(TinyConfig().ToJson().dump());
  j["data"]["colour"] = 1;
  EXPECT_THROW(ExperimentConfig::FromJson(j), ArgumentError);
  EXPECT_THROW(ExperimentConfig::FromJson(nlohmann::json::parse(R"({"bogus": 1})")),
               ArgumentError);
  ExperimentConfig bad = TinyConfig();
  bad.real_dir = "/definitely/not/here";
  EXPECT_THROW(bad.Validate(), IoError);
  bad = TinyConfig();
  bad.detectors = {"pix", "prnu"};
  EXPECT_THROW(bad.Validate(), ArgumentError);
  bad = TinyConfig();
  bad.detectors = {"stage6"};
  EXPECT_THROW(bad.Validate(), ArgumentError);
  bad = TinyConfig();
  bad.fake_mode = FakeMode::kTrainedGenerator;
  EXPECT_THROW(bad.Validate(), ArgumentError);
}

TEST(GridCsvTest, RoundTripWithFailedCell) {
  EvalReport r;
  r.detectors = {"pix", "fft_2d"};
  r.conditions = {"Raw", "+E", "+P"};
  r.grid["pix"] = {{"Raw", {0.95, ""}}, {"+E", {0.1 + 0.2, ""}}, {"+P", {0.5, ""}}};
  r.grid["fft_2d"] = {{"Raw", {1.0, ""}}, {"+E", {std::nullopt, "boom"}},
                      {"+P", {0.0, ""}}};
  const std::string csv = GridCsv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "detector,Raw,+E,+P");
  const auto parsed = ParseGridCsv(csv);
  ASSERT_EQ(parsed.size(), 2u);
  for (const auto& d : r.detectors) {
    for (const auto& c : r.conditions) {
      EXPECT_EQ(parsed.at(d).at(c).accuracy, r.grid[d][c].accuracy) << d << c;
    }
  }
}

TEST(RunExperimentTest, MinimalGridIsOneByOne) {
  ScopedDir dir("run1x1");
  ExperimentConfig cfg = TinyConfig();
  cfg.detectors = {"pix"};
  cfg.conditions = {Condition::kRaw};
  const RunResult r = RunExperiment(cfg, dir.path());
  ASSERT_TRUE(r.ok) << r.error_message;
  ASSERT_TRUE(r.report.has_value());
  EXPECT_EQ(r.report->grid.size(), 1u);
  EXPECT_EQ(r.report->grid.at("pix").size(), 1u);
  EXPECT_TRUE(r.report->grid.at("pix").at("Raw").accuracy.has_value());
  EXPECT_EQ(Slurp(dir.path() / "grid.csv").substr(0, 14), "detector,Raw\np");
}

class FullRunTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new ScopedDir("full");
    cfg_ = new ExperimentConfig(TinyConfig());
    cfg_->detectors = {"pix", "stage5", "avg", "image", "spectrum_1d", "fft_2d",
                       "dct_2d"};
    result_ = new RunResult(RunExperiment(*cfg_, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete cfg_;
    delete dir_;
  }
  static ScopedDir* dir_;
  static ExperimentConfig* cfg_;
  static RunResult* result_;
};
ScopedDir* FullRunTest::dir_ = nullptr;
ExperimentConfig* FullRunTest::cfg_ = nullptr;
RunResult* FullRunTest::result_ = nullptr;

TEST_F(FullRunTest, GridIsComplete) {
  ASSERT_TRUE(result_->ok) << result_->error_message;
  const EvalReport& r = *result_->report;
  EXPECT_EQ(result_->ran.size(), 7u);
  for (const auto& d : cfg_->detectors) {
    for (const char* c : {"Raw", "+E", "+P"}) {
      const EvalCell& cell = r.grid.at(d).at(c);
      ASSERT_TRUE(cell.accuracy.has_value()) << d << c << cell.failure;
      EXPECT_GE(*cell.accuracy, 0.0);
      EXPECT_LE(*cell.accuracy, 1.0);
      EXPECT_EQ(r.scores.at(d).at(c).size(), r.test_paths.size());
    }
  }
  const auto parsed = ParseGridCsv(Slurp(dir_->path() / "grid.csv"));
  for (const auto& [d, row] : r.grid) {
    for (const auto& [c, cell] : row) EXPECT_EQ(parsed.at(d).at(c).accuracy, cell.accuracy);
  }
  EXPECT_TRUE(r.directional.contains("stage5"));
  EXPECT_TRUE(r.directional.contains("pix"));
}

TEST_F(FullRunTest, ReportCarriesConfigAndEnvironment) {
  ASSERT_TRUE(result_->ok);
  const auto j = nlohmann::json::parse(Slurp(dir_->path() / "report.json"));
  EXPECT_EQ(ExperimentConfig::FromJson(j.at("config")).ToJson(), cfg_->ToJson());
  EXPECT_TRUE(j.at("environment").contains("jpeg_codec"));
  EXPECT_EQ(j.at("histograms").size(), 2u);
  EXPECT_EQ(j.at("histograms")[0].at("real_counts").size(), 64u);
}

TEST_F(FullRunTest, CamPlotsMatchSourceSize) {
  ASSERT_TRUE(result_->ok);
  const EvalReport& r = *result_->report;
  ASSERT_EQ(r.cams.size(), 2u);
  for (size_t i = 0; i < r.cams.size(); ++i) {
    const Image src = LoadImage(r.cams[i].image_path);
    const Image plot =
        LoadImage(dir_->path() / "plots" / ("cam_" + std::to_string(i) + ".png"));
    EXPECT_EQ(plot.height(), src.height());
    EXPECT_EQ(plot.width(), src.width());
    EXPECT_EQ(LoadImage(r.cams[i].cam_path).height(), src.height());
  }
  EXPECT_TRUE(fs::exists(dir_->path() / "plots" / "hist_level0.png"));
  EXPECT_TRUE(fs::exists(dir_->path() / "plots" / "hist_level5.png"));
}

TEST_F(FullRunTest, TrainingNeverReadsTestImages) {
  ASSERT_TRUE(result_->ok);
  const std::set<std::string> test(result_->report->test_paths.begin(),
                                   result_->report->test_paths.end());
  ASSERT_FALSE(test.empty());
  int logs = 0;
  for (const auto& e : fs::directory_iterator(dir_->path() / "logs")) {
    if (e.path().filename().string().find("_inputs.txt") == std::string::npos) continue;
    ++logs;
    std::istringstream in(Slurp(e.path()));
    std::string line;
    while (std::getline(in, line)) {
      ASSERT_EQ(test.count(line), 0u) << line << " in " << e.path();
    }
  }
  EXPECT_GE(logs, 4);
}

TEST_F(FullRunTest, RerunIsIdenticalAndResumesFromStage) {
  ASSERT_TRUE(result_->ok);
  const std::string grid = Slurp(dir_->path() / "grid.csv");

  // Fresh directory, same config: byte-identical grid.
  ScopedDir other("full_again");
  const RunResult again = RunExperiment(*cfg_, other.path());
  ASSERT_TRUE(again.ok) << again.error_message;
  EXPECT_EQ(Slurp(other.path() / "grid.csv"), grid);

  // Everything done: nothing reruns.
  EXPECT_TRUE(RunExperiment(*cfg_, other.path()).ran.empty());

  // Drop the detector stage marker: it and everything downstream rerun.
  fs::remove(other.path() / "stages" / "05_detectors.done");
  const RunResult resumed = RunExperiment(*cfg_, other.path());
  ASSERT_TRUE(resumed.ok) << resumed.error_message;
  EXPECT_EQ(resumed.ran, (std::vector<Stage>{Stage::kDetectors, Stage::kEvaluate,
                                             Stage::kReport}));
  EXPECT_EQ(Slurp(other.path() / "grid.csv"), grid);
}

TEST(RunExperimentTest, ConfigMismatchInSameDirRejected) {
  ScopedDir dir("mismatch");
  ExperimentConfig cfg = TinyConfig();
  cfg.detectors = {"pix"};
  cfg.conditions = {Condition::kRaw};
  ASSERT_TRUE(RunExperiment(cfg, dir.path(), Stage::kSplit).ok);
  cfg.seed = 6;
  EXPECT_THROW(RunExperiment(cfg, dir.path()), ArgumentError);
}

TEST(RunExperimentTest, StageFailureYieldsPartialReport) {
  ScopedDir dir("fail");
  ExperimentConfig cfg = TinyConfig();
  cfg.detectors = {"pix", "dct_2d"};
  const RunResult first = RunExperiment(cfg, dir.path(), Stage::kResynth);
  ASSERT_TRUE(first.ok) << first.error_message;
  // Corrupt one test fake; evaluation must fail loudly.
  const Manifest test = LoadManifest(dir.path() / "manifests" / "fake_test.jsonl");
  std::ofstream(test.entries.at(0).path, std::ios::binary | std::ios::trunc) << "junk";
  const RunResult r = RunExperiment(cfg, dir.path());
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.error_kind, "format_error");
  ASSERT_TRUE(r.report.has_value());
  for (const auto& d : cfg.detectors) {
    for (const char* c : {"Raw", "+E", "+P"}) {
      EXPECT_FALSE(r.report->grid.at(d).at(c).accuracy.has_value());
      EXPECT_FALSE(r.report->grid.at(d).at(c).failure.empty());
    }
  }
  const auto failure = nlohmann::json::parse(Slurp(dir.path() / "failure.json"));
  EXPECT_EQ(failure.at("where"), "evaluate");
  EXPECT_NE(Slurp(dir.path() / "grid.csv").find("failed"), std::string::npos);
}

int RunCli(const std::string& args, const fs::path& err) {
  const std::string cmd =
      std::string(RSD_CLI_PATH) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ErrorsAreMachineReadable) {
  ScopedDir dir("cli");
  const fs::path cfg = dir.path() / "bad.json";
  std::ofstream(cfg) << R"({"data": {"n_real": 1}})";
  const fs::path err = dir.path() / "err.json";
  EXPECT_EQ(RunCli("run-all --config " + cfg.string() + " --out-dir " +
                       (dir.path() / "out").string(),
                   err),
            1);
  const auto j = nlohmann::json::parse(Slurp(err));
  EXPECT_EQ(j.at("error").at("kind"), "argument_error");
  EXPECT_FALSE(j.at("error").at("message").get<std::string>().empty());

  EXPECT_EQ(RunCli("no-such-command --out-dir x", err), 2);
  EXPECT_EQ(RunCli("run-all", err), 2);
}

TEST(CliTest, SubcommandsStopAtTheirStage) {
  ScopedDir dir("cli_ok");
  ExperimentConfig c = TinyConfig();
  c.detectors = {"pix"};
  c.conditions = {Condition::kRaw};
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << c.ToJson().dump(2);
  const fs::path out = dir.path() / "out";
  const fs::path err = dir.path() / "err.txt";
  const std::string common = " --config " + cfg.string() + " --out-dir " + out.string();
  ASSERT_EQ(RunCli("make-fakes" + common, err), 0) << Slurp(err);
  EXPECT_TRUE(fs::exists(out / "stages" / "02_fakes.done"));
  EXPECT_FALSE(fs::exists(out / "stages" / "03_resynth.done"));
  ASSERT_EQ(RunCli("train-resynth" + common, err), 0) << Slurp(err);
  EXPECT_TRUE(fs::exists(out / "models" / "phi.ckpt"));
  ASSERT_EQ(RunCli("train-detectors" + common, err), 0) << Slurp(err);
  EXPECT_TRUE(fs::exists(out / "stages" / "05_detectors.done"));
  ASSERT_EQ(RunCli("evaluate" + common, err), 0) << Slurp(err);
  EXPECT_FALSE(fs::exists(out / "grid.csv"));
  ASSERT_EQ(RunCli("report" + common, err), 0) << Slurp(err);
  EXPECT_TRUE(fs::exists(out / "grid.csv"));
  // --seed overrides the config seed; the output directory then disagrees.
  EXPECT_EQ(RunCli("run-all --seed 99" + common, err), 1);
}

}  // namespace
}  // namespace rsd
