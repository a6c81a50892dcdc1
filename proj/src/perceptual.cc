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

#include "rsd/perceptual.h"

#include <random>

#include "rsd/errors.h"
#include "rsd/nn/image_tensor.h"
#include "rsd/nn/ops.h"

namespace rsd {
namespace {

std::string ConvName(int stage, int conv) {
  return "stage" + std::to_string(stage) + ".conv" + std::to_string(conv);
}

}  // namespace

std::vector<int> DefaultExtractorWidths(int n_stages) {
  RSD_REQUIRE(n_stages >= 1 && n_stages <= 6, "n_stages must be in [1, 6]");
  static const int kWidths[] = {16, 32, 64, 128, 128, 128};
  return std::vector<int>(kWidths, kWidths + n_stages);
}

void ExtractorConfig::Validate() const {
  RSD_REQUIRE(n_stages >= 1 && n_stages <= 6, "n_stages must be in [1, 6]");
  RSD_REQUIRE(int(widths.size()) == n_stages,
              "extractor needs one width per stage");
  for (int w : widths) RSD_REQUIRE(w > 0, "extractor widths must be positive");
  RSD_REQUIRE(in_channels > 0, "in_channels must be positive");
}

nn::ParamSet<float> InitExtractorParams(const ExtractorConfig& config,
                                        uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  nn::ParamSet<float> ps;
  int in = config.in_channels;
  for (int s = 1; s <= config.n_stages; ++s) {
    const int out = config.widths[size_t(s - 1)];
    for (int k = 1; k <= 2; ++k) {
      const int cin = k == 1 ? in : out;
      ps.Add(ConvName(s, k) + ".w",
             nn::HeNormal<float>({out, cin, 3, 3}, cin * 9, rng));
      if (config.use_bias) ps.Add(ConvName(s, k) + ".b", nn::Tensor<float>({out}));
    }
    in = out;
  }
  return ps;
}

template <typename T>
std::vector<nn::NodeId> ExtractorForward(nn::Tape<T>& tape,
                                         const nn::BoundParams<T>& params,
                                         const ExtractorConfig& config,
                                         nn::NodeId x, int up_to_stage) {
  const int last = up_to_stage < 0 ? config.n_stages : up_to_stage;
  RSD_REQUIRE(last >= 0 && last <= config.n_stages, "stage out of range");
  std::vector<nn::NodeId> outs;
  nn::NodeId h = x;
  for (int s = 1; s <= last; ++s) {
    for (int k = 1; k <= 2; ++k) {
      const std::string name = ConvName(s, k);
      h = nn::Conv2d(tape, h, params(name + ".w"), params.Optional(name + ".b"),
                     1, 1);
      h = nn::Relu(tape, h);
    }
    h = nn::MaxPool2(tape, h);
    outs.push_back(h);
  }
  return outs;
}

template std::vector<nn::NodeId> ExtractorForward<float>(
    nn::Tape<float>&, const nn::BoundParams<float>&, const ExtractorConfig&,
    nn::NodeId, int);
template std::vector<nn::NodeId> ExtractorForward<double>(
    nn::Tape<double>&, const nn::BoundParams<double>&, const ExtractorConfig&,
    nn::NodeId, int);

StageFeatureExtractor StageFeatureExtractor::Build(const ExtractorConfig& config,
                                                   uint64_t seed) {
  return StageFeatureExtractor(
      config,
      std::make_shared<const nn::ParamSet<float>>(
          InitExtractorParams(config, seed)),
      "seed:" + std::to_string(seed));
}

StageFeatureExtractor StageFeatureExtractor::FromCheckpoint(
    const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::kExtractor) {
    throw KindMismatch(std::string("expected an extractor checkpoint, got ") +
                       CheckpointKindName(ckpt.kind));
  }
  ExtractorConfig cfg;
  cfg.n_stages = ckpt.ConfigInt("n_stages");
  cfg.in_channels = ckpt.ConfigInt("in_channels");
  cfg.use_bias = ckpt.ConfigInt("use_bias") != 0;
  cfg.widths.clear();
  for (int s = 1; s <= cfg.n_stages; ++s) {
    cfg.widths.push_back(ckpt.ConfigInt("width" + std::to_string(s)));
  }
  cfg.Validate();
  auto params = nn::FromNamedArrays(ckpt.weights);
  nn::CheckSameLayout(InitExtractorParams(cfg, 0), params);
  auto it = ckpt.arch_config.find("provenance");
  return StageFeatureExtractor(
      cfg, std::make_shared<const nn::ParamSet<float>>(std::move(params)),
      it == ckpt.arch_config.end() ? "checkpoint" : it->second);
}

Checkpoint StageFeatureExtractor::ToCheckpoint() const {
  Checkpoint c;
  c.kind = CheckpointKind::kExtractor;
  c.arch_config["n_stages"] = std::to_string(config_.n_stages);
  c.arch_config["in_channels"] = std::to_string(config_.in_channels);
  c.arch_config["use_bias"] = config_.use_bias ? "1" : "0";
  for (int s = 1; s <= config_.n_stages; ++s) {
    c.arch_config["width" + std::to_string(s)] =
        std::to_string(config_.widths[size_t(s - 1)]);
  }
  c.arch_config["provenance"] = provenance_;
  c.weights = nn::ToNamedArrays(*params_);
  return c;
}

StageFeatures StageFeatureExtractor::Extract(const Image& img) const {
  const int min_side = 1 << config_.n_stages;
  RSD_REQUIRE(img.channels() == config_.in_channels,
              "extractor channel count mismatch");
  RSD_REQUIRE(img.height() >= min_side && img.width() >= min_side,
              "image too small for " + std::to_string(config_.n_stages) +
                  " stages");
  nn::Tape<float> tape;
  nn::BoundParams<float> bound(tape, *params_, false);
  const nn::NodeId x = tape.Constant(nn::ImageToTensor<float>(img));
  StageFeatures out;
  out.input_shape = {img.channels(), img.height(), img.width()};
  for (nn::NodeId id : ExtractorForward(tape, bound, config_, x)) {
    out.stages.push_back(tape.value(id));
  }
  return out;
}

std::vector<int> StageFeatureExtractor::StageBoundaries() const {
  std::vector<int> b;
  for (int s = 1; s <= config_.n_stages; ++s) b.push_back(2 * s);
  return b;
}

}  // namespace rsd
