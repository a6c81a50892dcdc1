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

#ifndef RSD_RESYNTH_H_
#define RSD_RESYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rsd/checkpoint.h"
#include "rsd/degrade.h"
#include "rsd/image.h"
#include "rsd/manifest.h"
#include "rsd/nn/optim.h"
#include "rsd/nn/params.h"
#include "rsd/nn/tape.h"
#include "rsd/perceptual.h"

namespace rsd {

// Residual-dense super-resolution topology:
//   shallow conv3x3 (in -> C)
//   n_blocks x [block_layers densely connected conv3x3+ReLU (growth G),
//               1x1 local fusion back to C, + block input]
//   conv3x3 (C -> C) + shallow features
//   log2(sr_factor) x [conv3x3 (c -> 4c'), pixel shuffle 2x], c' = C, C/2, ...
//   conv3x3 (c' -> in)
struct SRConfig {
  int n_blocks = 4;
  int base_channels = 32;
  int growth = 16;
  int block_layers = 3;
  int sr_factor = 4;
  int in_channels = 3;

  void Validate() const;
  // Channel width after each 2x upsampling step.
  std::vector<int> UpsampleWidths() const;
};

class SRModel {
 public:
  static SRModel Build(const SRConfig& config, uint64_t seed);
  static SRModel FromCheckpoint(const Checkpoint& ckpt);
  Checkpoint ToCheckpoint(const std::vector<LogEntry>& log = {}) const;

  // Evaluation-mode forward: (C, h, w) -> (C, h * sr_factor, w * sr_factor).
  Image Reconstruct(const Image& low) const;

  const SRConfig& config() const { return config_; }
  int sr_factor() const { return config_.sr_factor; }
  const nn::ParamSet<float>& params() const { return params_; }
  nn::ParamSet<float>& mutable_params() { return params_; }

 private:
  SRModel(SRConfig config, nn::ParamSet<float> params)
      : config_(config), params_(std::move(params)) {}

  SRConfig config_;
  nn::ParamSet<float> params_;
};

nn::ParamSet<float> InitSrParams(const SRConfig& config, uint64_t seed);

template <typename T>
nn::NodeId SrForward(nn::Tape<T>& tape, const nn::BoundParams<T>& params,
                     const SRConfig& config, nn::NodeId low);

// Loss weights from pixel (index 0) to the deepest stage.
struct AlphaWeights {
  std::vector<double> alphas = {1.0, 1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};

  void Validate(int n_stages) const;
};

// mean |x - x_hat| over all elements.
double PixelLoss(const Image& x, const Image& x_hat);

// alpha_0 * PixelLoss + sum_i alpha_i * mean |stage_i(x) - stage_i(x_hat)|.
double PerceptualLoss(const Image& x, const Image& x_hat,
                      const StageFeatureExtractor& ext, const AlphaWeights& a);

// Graph form of PerceptualLoss. `target` is the ground-truth image node and
// `target_stages` optionally carries its precomputed stage features
// (index i for stage i + 1); stages with alpha 0 are never evaluated.
template <typename T>
nn::NodeId PerceptualLossGraph(nn::Tape<T>& tape, nn::NodeId target,
                               nn::NodeId reconstruction,
                               const nn::BoundParams<T>& ext_params,
                               const ExtractorConfig& ext_config,
                               const AlphaWeights& a,
                               const std::vector<nn::Tensor<T>>* target_stages =
                                   nullptr);

struct ResynthResult {
  SRModel model;
  TrainLog log;
};

// Trains the re-synthesizer on real images only. Throws ContractViolation if
// any manifest entry is labelled fake. When `inputs_log` is given, every
// path read is appended to it.
ResynthResult TrainResynth(const Manifest& reals, const OmegaSpec& omega,
                           const StageFeatureExtractor& ext,
                           const AlphaWeights& alphas, const TrainConfig& cfg,
                           const SRConfig& sr_config = {},
                           std::vector<std::string>* inputs_log = nullptr);

// Same loop over in-memory images (all assumed real).
ResynthResult TrainResynthOnImages(const std::vector<Image>& reals,
                                   const OmegaSpec& omega,
                                   const StageFeatureExtractor& ext,
                                   const AlphaWeights& alphas,
                                   const TrainConfig& cfg,
                                   const SRConfig& sr_config = {});

}  // namespace rsd

#endif  // RSD_RESYNTH_H_
