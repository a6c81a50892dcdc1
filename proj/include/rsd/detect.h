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

#ifndef RSD_DETECT_H_
#define RSD_DETECT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsd/checkpoint.h"
#include "rsd/image.h"
#include "rsd/manifest.h"
#include "rsd/nn/optim.h"
#include "rsd/nn/params.h"
#include "rsd/nn/tape.h"

namespace rsd {

inline constexpr int kRealClass = 0;
inline constexpr int kFakeClass = 1;

enum class ClassifierArch { kResidualCnn, kLinear };

// kResidualCnn: conv3x3 stem -> 3 residual blocks (widths[0..2], stride 2
// between blocks) -> global average pool -> linear to 2 logits.
// kLinear: flattened input -> linear to 2 logits.
struct ClassifierArchConfig {
  ClassifierArch arch = ClassifierArch::kResidualCnn;
  std::vector<int> input_shape;  // [C, H, W] or [N]
  std::vector<int> widths = {16, 32, 64};
};

struct Classifier {
  int level = 0;
  ClassifierArchConfig arch;
  nn::ParamSet<float> params;
  // Per-channel input standardization (per feature for [N] inputs),
  // estimated from the training inputs.
  std::vector<float> norm_mean;
  std::vector<float> norm_std;
  // Extra provenance recorded in checkpoints (e.g. baseline feature kind).
  std::map<std::string, std::string> tags;

  Checkpoint ToCheckpoint(const std::vector<LogEntry>& log = {}) const;
  static Classifier FromCheckpoint(const Checkpoint& ckpt);
};

Classifier BuildClassifier(int level, std::vector<int> input_shape,
                           uint64_t seed);
Classifier BuildLinearClassifier(int level, int n_features, uint64_t seed);

nn::ParamSet<float> InitClassifierParams(const ClassifierArchConfig& arch,
                                         uint64_t seed);

// Logit graph. When `last_block` is non-null it receives the output node
// of the last residual block (used for class activation maps).
template <typename T>
nn::NodeId ClassifierForward(nn::Tape<T>& tape, const nn::BoundParams<T>& p,
                             const ClassifierArchConfig& arch, nn::NodeId x,
                             nn::NodeId* last_block = nullptr);

// Applies the classifier's stored standardization.
nn::Tensor<float> NormalizeInput(const Classifier& c,
                                 const nn::Tensor<float>& input);

struct ClassifierTrainResult {
  Classifier classifier;
  TrainLog log;
};

// Estimates the input standardization from `inputs`, then minimizes softmax
// cross-entropy (label real -> class 0, fake -> class 1) with momentum SGD.
ClassifierTrainResult TrainClassifier(Classifier c,
                                      const std::vector<nn::Tensor<float>>& inputs,
                                      const std::vector<Label>& labels,
                                      const TrainConfig& cfg);

// Raw [real, fake] logits.
std::vector<double> ClassifierLogits(const Classifier& c,
                                     const nn::Tensor<float>& input);

double ProbFakeFromLogits(double real_logit, double fake_logit);

// Softmax probability of the fake class.
double Classify(const Classifier& c, const nn::Tensor<float>& input);

struct BetaWeights {
  std::vector<double> betas = {0.5, 0.0, 0.0, 0.0, 0.0, 0.5};

  void Validate() const;
  std::vector<int> ActiveLevels() const;
};

// sum_i beta_i p_i / sum_i beta_i over levels with beta_i > 0.
double Fuse(const std::map<int, double>& probs, const BetaWeights& betas);

// Fake iff score > threshold; ties resolve to real.
Label Decide(double score, double threshold);

// Gradient-weighted activation map of `cls` at the last residual block,
// rectified, bilinearly resized to the input's spatial size and scaled to
// max 1. Returned as a 1-channel image.
Image ComputeCam(const Classifier& c, const nn::Tensor<float>& input, int cls);

struct DetectorEnsemble {
  std::map<int, Classifier> classifiers;
  BetaWeights betas;
  double threshold = 0.5;

  void Validate() const;
  // Per-level probabilities and the fused score for one artifact stack.
  double Score(const std::map<int, nn::Tensor<float>>& artifacts,
               std::map<int, double>* per_level = nullptr) const;

  // One checkpoint per classifier plus ensemble.json in `dir`.
  void Save(const std::filesystem::path& dir) const;
  static DetectorEnsemble Load(const std::filesystem::path& dir);
  nlohmann::ordered_json Descriptor() const;
};

}  // namespace rsd

#endif  // RSD_DETECT_H_
