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

#ifndef RSD_HARNESS_H_
#define RSD_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsd/baselines.h"
#include "rsd/degrade.h"
#include "rsd/detect.h"
#include "rsd/image.h"
#include "rsd/manifest.h"
#include "rsd/nn/optim.h"
#include "rsd/perceptual.h"
#include "rsd/residual.h"
#include "rsd/resynth.h"

namespace rsd {

enum class FakeMode { kTrainedGenerator, kPseudoFake };
const char* FakeModeName(FakeMode mode);
FakeMode ParseFakeMode(const std::string& name);

// Test-time conditions: untouched, spectrum-equalized fakes, perturbed.
enum class Condition { kRaw, kEqualize, kPerturb };
const char* ConditionName(Condition c);  // "Raw", "+E", "+P"
Condition ParseCondition(const std::string& name);

// Small DCGAN-style pair used by the trained_generator fake mode. The
// generator projects z to [widths[0], 4, 4] and applies four stride-2
// transposed convolutions up to 64x64.
struct GeneratorConfig {
  int z_dim = 64;
  std::vector<int> widths = {128, 64, 32, 16};
  int steps = 300;
  int batch_size = 16;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;

  void Validate() const;
};

struct ExperimentConfig {
  // Directory of real PNG/JPEG images. Empty selects procedural reals.
  std::string real_dir;
  int n_real = 500;
  int n_fake = 500;
  int image_size = 64;
  double test_frac = 0.2;
  FakeMode fake_mode = FakeMode::kPseudoFake;
  OmegaSpec omega;
  AlphaWeights alphas;
  BetaWeights betas;
  PerturbParams perturb;
  SRConfig sr;
  ExtractorConfig extractor;
  // Seeds of the three training configs are derived from `seed`.
  TrainConfig resynth_train;
  TrainConfig classifier_train;
  TrainConfig baseline_train;
  GeneratorConfig generator;
  // Any of "pix", "stage<k>", "avg", "image", "spectrum_1d", "fft_2d",
  // "dct_2d".
  std::vector<std::string> detectors = {"pix", "stage5", "avg"};
  std::vector<Condition> conditions = {Condition::kRaw, Condition::kEqualize,
                                       Condition::kPerturb};
  double threshold = 0.5;
  int n_cams = 4;
  uint64_t seed = 0;

  void Validate() const;
  // Residual levels whose classifiers the requested detectors need.
  std::vector<int> ResidualLevels() const;
  std::vector<FeatureKind> BaselineKinds() const;

  nlohmann::ordered_json ToJson() const;
  // Missing keys keep their defaults; unknown keys are an ArgumentError.
  static ExperimentConfig FromJson(const nlohmann::json& j);
};

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

// Procedural stand-in for a natural image: smooth gradients, soft blobs and
// low-to-mid frequency texture, mildly blurred, with faint sensor noise.
Image SyntheticReal(int size, uint64_t seed);

// Nearest-neighbour 4x down and up sampling followed by 5-bit quantization.
Image PseudoFake(const Image& img);

struct GeneratorTrainResult {
  nn::ParamSet<float> generator;
  std::vector<LogEntry> d_loss;
  std::vector<LogEntry> g_loss;
};

// Adversarial training on 64x64 reals. Throws TrainingDiverged, after
// writing the loss log to `log_path` when given, if a loss is not finite.
GeneratorTrainResult TrainGenerator(const std::vector<Image>& reals,
                                    const GeneratorConfig& cfg, uint64_t seed,
                                    const std::filesystem::path& log_path = {});
Image SampleGenerator(const nn::ParamSet<float>& generator,
                      const GeneratorConfig& cfg, uint64_t seed);

// Writes one fake PNG per real (pseudo_fake) or reals.Count() samples
// (trained_generator) into `out_dir`, plus `out_dir`/manifest.jsonl.
Manifest MakeToyFakes(const Manifest& reals, FakeMode mode,
                      const GeneratorConfig& gen, uint64_t seed,
                      const std::filesystem::path& out_dir);

// Fraction of Decide(score, threshold) == label.
double Accuracy(const std::vector<double>& scores,
                const std::vector<Label>& labels, double threshold);

struct EvalCell {
  std::optional<double> accuracy;
  std::string failure;  // set when accuracy is absent
};

struct CamRecord {
  std::string image_path;  // source test image
  std::string cam_path;    // grayscale map at the image's size
  std::string detector;
};

struct EvalReport {
  std::vector<std::string> detectors;
  std::vector<std::string> conditions;
  std::map<std::string, std::map<std::string, EvalCell>> grid;
  // detector -> condition -> probability of fake per test image.
  std::map<std::string, std::map<std::string, std::vector<double>>> scores;
  std::vector<std::string> test_paths;
  std::vector<Label> test_labels;
  std::vector<HistogramReport> histograms;
  std::vector<CamRecord> cams;
  nlohmann::ordered_json config;
  nlohmann::ordered_json environment;
  // stage-vs-pixel comparison under +P when both detectors ran.
  nlohmann::ordered_json directional;
  std::vector<nlohmann::ordered_json> failures;

  nlohmann::ordered_json ToJson() const;
  static EvalReport FromJson(const nlohmann::json& j);
};

// report.json, grid.csv, plots/hist_level<k>.png, plots/cam_<i>.png.
void EmitReport(const EvalReport& report, const std::filesystem::path& out_dir);

std::string GridCsv(const EvalReport& report);
// detector -> condition -> cell, as written by GridCsv.
std::map<std::string, std::map<std::string, EvalCell>> ParseGridCsv(
    const std::string& csv);

enum class Stage {
  kSplit = 1,
  kFakes,
  kResynth,
  kArtifacts,
  kDetectors,
  kEvaluate,
  kReport,
};
const char* StageName(Stage s);

struct RunResult {
  std::optional<EvalReport> report;  // present once evaluation ran
  std::vector<Stage> ran;            // stages executed by this call
  bool ok = true;
  std::string error_kind;
  std::string error_message;
};

// Runs every stage up to `last` in `out_dir`, skipping stages whose
// completion marker exists. A failing stage is recorded in
// `out_dir`/failure.json and, when evaluation can still be reported, in a
// partial report.
RunResult RunExperiment(const ExperimentConfig& cfg,
                        const std::filesystem::path& out_dir,
                        Stage last = Stage::kReport);

// Records of the library versions that can change results.
nlohmann::ordered_json EnvironmentRecord();

}  // namespace rsd

#endif  // RSD_HARNESS_H_
