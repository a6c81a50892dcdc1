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

#ifndef RSD_NN_OPTIM_H_
#define RSD_NN_OPTIM_H_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rsd/checkpoint.h"
#include "rsd/nn/params.h"

namespace rsd {

// Momentum gradient-descent training schedule. The learning rate for epoch
// e (0-based) is the value of the last lr_schedule entry with epoch <= e,
// or `lr` if none applies.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  std::vector<std::pair<int, double>> lr_schedule = {{10, 0.001}};
  uint64_t seed = 0;

  double LrAt(int epoch) const;
  void Validate() const;
};

struct TrainLog {
  std::vector<LogEntry> steps;  // one entry per optimizer step: mean batch loss
  std::vector<double> epoch_lr;
};

}  // namespace rsd

namespace rsd::nn {

// v <- momentum * v + g;  p <- p - lr * v
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}
  void Step(ParamSet<float>& params, const std::vector<Tensor<float>>& grads,
            double lr);

 private:
  double momentum_;
  std::vector<Tensor<float>> velocity_;
};

class Adam {
 public:
  Adam(double beta1, double beta2, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void Step(ParamSet<float>& params, const std::vector<Tensor<float>>& grads,
            double lr);

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<float>> m_, v_;
};

std::vector<Tensor<float>> ZerosLike(const ParamSet<float>& params);
void AddInto(std::vector<Tensor<float>>& acc,
             const std::vector<Tensor<float>>& g);
void ScaleInPlace(std::vector<Tensor<float>>& g, float s);

// Called once per sample of a minibatch. It adds that sample's loss
// gradient into `grads` and returns the sample loss. `sample_seed` is
// unique to (epoch, position) and fixed by TrainConfig::seed.
using SampleStepFn = std::function<double(
    size_t sample, uint64_t sample_seed, std::vector<Tensor<float>>& grads)>;

// Minibatch momentum SGD over `n_samples` items, reshuffled each epoch from
// the config seed. Gradients are averaged over the batch. Throws
// TrainingDiverged when a batch loss is not finite.
TrainLog TrainSgd(ParamSet<float>& params, size_t n_samples,
                  const TrainConfig& cfg, const SampleStepFn& step);

}  // namespace rsd::nn

#endif  // RSD_NN_OPTIM_H_
