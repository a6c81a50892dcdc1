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

#ifndef RSD_PERCEPTUAL_H_
#define RSD_PERCEPTUAL_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rsd/checkpoint.h"
#include "rsd/image.h"
#include "rsd/nn/params.h"
#include "rsd/nn/tape.h"

namespace rsd {

// Frozen convolutional pyramid. Stage i is conv3x3 -> ReLU -> conv3x3 ->
// ReLU -> 2x2 max pool, so every stage halves the spatial size.
struct ExtractorConfig {
  int n_stages = 5;
  std::vector<int> widths = {16, 32, 64, 128, 128};
  int in_channels = 3;
  bool use_bias = false;

  void Validate() const;
};

// Default widths for an n-stage pyramid (n in [1, 6]).
std::vector<int> DefaultExtractorWidths(int n_stages);

struct StageFeatures {
  std::vector<nn::Tensor<float>> stages;  // stages[i] is stage i + 1
  std::vector<int> input_shape;
};

class StageFeatureExtractor {
 public:
  static StageFeatureExtractor Build(const ExtractorConfig& config,
                                     uint64_t seed);
  static StageFeatureExtractor FromCheckpoint(const Checkpoint& ckpt);
  Checkpoint ToCheckpoint() const;

  // Needs H and W >= 2^n_stages.
  StageFeatures Extract(const Image& img) const;

  int n_stages() const { return config_.n_stages; }
  const ExtractorConfig& config() const { return config_; }
  const nn::ParamSet<float>& params() const { return *params_; }
  const std::string& provenance() const { return provenance_; }

  // Index (1-based) of the last convolution of each stage.
  std::vector<int> StageBoundaries() const;

 private:
  StageFeatureExtractor(ExtractorConfig config,
                        std::shared_ptr<const nn::ParamSet<float>> params,
                        std::string provenance)
      : config_(std::move(config)),
        params_(std::move(params)),
        provenance_(std::move(provenance)) {}

  ExtractorConfig config_;
  std::shared_ptr<const nn::ParamSet<float>> params_;
  std::string provenance_;
};

nn::ParamSet<float> InitExtractorParams(const ExtractorConfig& config,
                                        uint64_t seed);

// Records the pyramid on `tape` and returns the node of each stage output,
// up to and including `up_to_stage` (defaults to all).
template <typename T>
std::vector<nn::NodeId> ExtractorForward(nn::Tape<T>& tape,
                                         const nn::BoundParams<T>& params,
                                         const ExtractorConfig& config,
                                         nn::NodeId x, int up_to_stage = -1);

}  // namespace rsd

#endif  // RSD_PERCEPTUAL_H_
