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

#include "rsd/resynth.h"

#include <cmath>
#include <random>

#include "rsd/errors.h"
#include "rsd/nn/image_tensor.h"
#include "rsd/nn/ops.h"
#include "rsd/seed.h"

namespace rsd {
namespace {

std::string BlockConv(int b, int l) {
  return "block" + std::to_string(b) + ".conv" + std::to_string(l);
}

int Log2Exact(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  return (1 << k) == v ? k : -1;
}

void AddConv(nn::ParamSet<float>& ps, const std::string& name, int out, int in,
             int k, std::mt19937_64& rng, double gain = 1.0) {
  ps.Add(name + ".w", nn::HeNormal<float>({out, in, k, k}, in * k * k, rng, gain));
  ps.Add(name + ".b", nn::Tensor<float>({out}));
}

}  // namespace

void SRConfig::Validate() const {
  RSD_REQUIRE(n_blocks >= 0, "n_blocks must be >= 0");
  RSD_REQUIRE(base_channels >= 2 && growth >= 1 && block_layers >= 1,
              "SR widths must be positive");
  RSD_REQUIRE(sr_factor >= 2 && Log2Exact(sr_factor) > 0,
              "sr_factor must be a power of two >= 2");
  RSD_REQUIRE(in_channels >= 1, "in_channels must be >= 1");
}

std::vector<int> SRConfig::UpsampleWidths() const {
  std::vector<int> w;
  int c = base_channels;
  for (int s = 0; s < Log2Exact(sr_factor); ++s) {
    if (s > 0) c = std::max(c / 2, 1);
    w.push_back(c);
  }
  return w;
}

nn::ParamSet<float> InitSrParams(const SRConfig& config, uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  nn::ParamSet<float> ps;
  const int c = config.base_channels, g = config.growth;
  AddConv(ps, "shallow", c, config.in_channels, 3, rng);
  for (int b = 0; b < config.n_blocks; ++b) {
    for (int l = 0; l < config.block_layers; ++l) {
      AddConv(ps, BlockConv(b, l), g, c + l * g, 3, rng);
    }
    // Small fusion weights start each block near the identity.
    AddConv(ps, "block" + std::to_string(b) + ".fuse", c,
            c + config.block_layers * g, 1, rng, 0.1);
  }
  AddConv(ps, "global", c, c, 3, rng, 0.1);
  int in = c;
  const auto widths = config.UpsampleWidths();
  for (size_t s = 0; s < widths.size(); ++s) {
    AddConv(ps, "up" + std::to_string(s), 4 * widths[s], in, 3, rng);
    in = widths[s];
  }
  AddConv(ps, "out", config.in_channels, in, 3, rng, 0.5);
  return ps;
}

template <typename T>
nn::NodeId SrForward(nn::Tape<T>& tape, const nn::BoundParams<T>& p,
                     const SRConfig& config, nn::NodeId low) {
  auto conv = [&](nn::NodeId x, const std::string& name, int pad) {
    return nn::Conv2d(tape, x, p(name + ".w"), p(name + ".b"), 1, pad);
  };
  const nn::NodeId shallow = conv(low, "shallow", 1);
  nn::NodeId h = shallow;
  for (int b = 0; b < config.n_blocks; ++b) {
    std::vector<nn::NodeId> feats = {h};
    for (int l = 0; l < config.block_layers; ++l) {
      const nn::NodeId in = feats.size() == 1 ? h : nn::Concat(tape, feats);
      feats.push_back(nn::Relu(tape, conv(in, BlockConv(b, l), 1)));
    }
    const nn::NodeId fused =
        conv(nn::Concat(tape, feats), "block" + std::to_string(b) + ".fuse", 0);
    h = nn::Add(tape, fused, h);
  }
  h = nn::Add(tape, conv(h, "global", 1), shallow);
  const auto widths = config.UpsampleWidths();
  for (size_t s = 0; s < widths.size(); ++s) {
    h = nn::PixelShuffle(tape, conv(h, "up" + std::to_string(s), 1), 2);
  }
  return conv(h, "out", 1);
}

template nn::NodeId SrForward<float>(nn::Tape<float>&,
                                     const nn::BoundParams<float>&,
                                     const SRConfig&, nn::NodeId);
template nn::NodeId SrForward<double>(nn::Tape<double>&,
                                      const nn::BoundParams<double>&,
                                      const SRConfig&, nn::NodeId);

SRModel SRModel::Build(const SRConfig& config, uint64_t seed) {
  return SRModel(config, InitSrParams(config, seed));
}

Checkpoint SRModel::ToCheckpoint(const std::vector<LogEntry>& log) const {
  Checkpoint c;
  c.kind = CheckpointKind::kSrModel;
  c.arch_config = {{"n_blocks", std::to_string(config_.n_blocks)},
                   {"base_channels", std::to_string(config_.base_channels)},
                   {"growth", std::to_string(config_.growth)},
                   {"block_layers", std::to_string(config_.block_layers)},
                   {"sr_factor", std::to_string(config_.sr_factor)},
                   {"in_channels", std::to_string(config_.in_channels)}};
  c.weights = nn::ToNamedArrays(params_);
  c.training_log = log;
  return c;
}

SRModel SRModel::FromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::kSrModel) {
    throw KindMismatch(std::string("expected an sr_model checkpoint, got ") +
                       CheckpointKindName(ckpt.kind));
  }
  SRConfig cfg;
  cfg.n_blocks = ckpt.ConfigInt("n_blocks");
  cfg.base_channels = ckpt.ConfigInt("base_channels");
  cfg.growth = ckpt.ConfigInt("growth");
  cfg.block_layers = ckpt.ConfigInt("block_layers");
  cfg.sr_factor = ckpt.ConfigInt("sr_factor");
  cfg.in_channels = ckpt.ConfigInt("in_channels");
  cfg.Validate();
  auto params = nn::FromNamedArrays(ckpt.weights);
  nn::CheckSameLayout(InitSrParams(cfg, 0), params);
  return SRModel(cfg, std::move(params));
}

Image SRModel::Reconstruct(const Image& low) const {
  RSD_REQUIRE(low.channels() == config_.in_channels,
              "SR input channel count mismatch");
  nn::Tape<float> tape;
  nn::BoundParams<float> bound(tape, params_, false);
  const nn::NodeId x = tape.Constant(nn::ImageToTensor<float>(low));
  return nn::TensorToImage(tape.value(SrForward(tape, bound, config_, x)));
}

void AlphaWeights::Validate(int n_stages) const {
  RSD_REQUIRE(int(alphas.size()) == n_stages + 1,
              "alpha weights need n_stages + 1 entries, got " +
                  std::to_string(alphas.size()));
  bool any = false;
  for (double a : alphas) {
    RSD_REQUIRE(a >= 0.0 && std::isfinite(a), "alpha weights must be >= 0");
    any |= a > 0.0;
  }
  RSD_REQUIRE(any, "at least one alpha weight must be positive");
}

double PixelLoss(const Image& x, const Image& x_hat) {
  RSD_REQUIRE(x.SameShape(x_hat), "pixel loss shape mismatch");
  const auto a = x.values(), b = x_hat.values();
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += double(std::abs(a[i] - b[i]));
  return s / double(a.size());
}

template <typename T>
nn::NodeId PerceptualLossGraph(nn::Tape<T>& tape, nn::NodeId target,
                               nn::NodeId reconstruction,
                               const nn::BoundParams<T>& ext_params,
                               const ExtractorConfig& ext_config,
                               const AlphaWeights& a,
                               const std::vector<nn::Tensor<T>>* target_stages) {
  a.Validate(ext_config.n_stages);
  std::vector<std::pair<nn::NodeId, T>> terms;
  if (a.alphas[0] > 0.0) {
    terms.emplace_back(nn::MeanAbsDiff(tape, target, reconstruction),
                       T(a.alphas[0]));
  }
  int deepest = 0;
  for (int s = 1; s <= ext_config.n_stages; ++s) {
    if (a.alphas[size_t(s)] > 0.0) deepest = s;
  }
  if (deepest > 0) {
    const auto rec = ExtractorForward(tape, ext_params, ext_config,
                                      reconstruction, deepest);
    std::vector<nn::NodeId> tgt;
    if (target_stages) {
      RSD_REQUIRE(int(target_stages->size()) >= deepest,
                  "missing precomputed target stages");
      for (int s = 0; s < deepest; ++s) {
        tgt.push_back(tape.Constant((*target_stages)[size_t(s)]));
      }
    } else {
      tgt = ExtractorForward(tape, ext_params, ext_config, target, deepest);
    }
    for (int s = 1; s <= deepest; ++s) {
      if (a.alphas[size_t(s)] <= 0.0) continue;
      terms.emplace_back(nn::MeanAbsDiff(tape, tgt[size_t(s - 1)],
                                         rec[size_t(s - 1)]),
                         T(a.alphas[size_t(s)]));
    }
  }
  return nn::WeightedSum(tape, terms);
}

template nn::NodeId PerceptualLossGraph<float>(
    nn::Tape<float>&, nn::NodeId, nn::NodeId, const nn::BoundParams<float>&,
    const ExtractorConfig&, const AlphaWeights&,
    const std::vector<nn::Tensor<float>>*);
template nn::NodeId PerceptualLossGraph<double>(
    nn::Tape<double>&, nn::NodeId, nn::NodeId, const nn::BoundParams<double>&,
    const ExtractorConfig&, const AlphaWeights&,
    const std::vector<nn::Tensor<double>>*);

double PerceptualLoss(const Image& x, const Image& x_hat,
                      const StageFeatureExtractor& ext, const AlphaWeights& a) {
  RSD_REQUIRE(x.SameShape(x_hat), "perceptual loss shape mismatch");
  nn::Tape<float> tape;
  nn::BoundParams<float> bound(tape, ext.params(), false);
  const nn::NodeId xt = tape.Constant(nn::ImageToTensor<float>(x));
  const nn::NodeId xh = tape.Constant(nn::ImageToTensor<float>(x_hat));
  return double(tape.value(
      PerceptualLossGraph(tape, xt, xh, bound, ext.config(), a))[0]);
}

ResynthResult TrainResynthOnImages(const std::vector<Image>& reals,
                                   const OmegaSpec& omega,
                                   const StageFeatureExtractor& ext,
                                   const AlphaWeights& alphas,
                                   const TrainConfig& cfg,
                                   const SRConfig& sr_config) {
  omega.Validate();
  alphas.Validate(ext.n_stages());
  RSD_REQUIRE(!reals.empty(), "no real images to train on");
  RSD_REQUIRE(omega.sr_factor == sr_config.sr_factor,
              "omega and SR model disagree on sr_factor");
  SRModel model = SRModel::Build(sr_config, DeriveSeed(cfg.seed, {0x5E}));

  // Ground-truth stage features never change; compute them once.
  std::vector<std::vector<nn::Tensor<float>>> target_stages(reals.size());
  std::vector<Image> lows(reals.size());
  for (size_t i = 0; i < reals.size(); ++i) {
    lows[i] = Downsample(reals[i], omega.sr_factor);
    bool needs_stages = false;
    for (size_t s = 1; s < alphas.alphas.size(); ++s) {
      needs_stages |= alphas.alphas[s] > 0.0;
    }
    if (needs_stages) target_stages[i] = ext.Extract(reals[i]).stages;
  }

  TrainLog result_log = nn::TrainSgd(
      model.mutable_params(), reals.size(), cfg,
      [&](size_t i, uint64_t seed, std::vector<nn::Tensor<float>>& grads) {
        nn::Tape<float> tape;
        nn::BoundParams<float> phi(tape, model.params(), true);
        nn::BoundParams<float> theta(tape, ext.params(), false);
        const Image low = ApplyOmega(lows[i], omega, seed);
        const nn::NodeId x_low = tape.Constant(nn::ImageToTensor<float>(low));
        const nn::NodeId target =
            tape.Constant(nn::ImageToTensor<float>(reals[i]));
        const nn::NodeId rec = SrForward(tape, phi, model.config(), x_low);
        const nn::NodeId loss = PerceptualLossGraph(
            tape, target, rec, theta, ext.config(), alphas,
            target_stages[i].empty() ? nullptr : &target_stages[i]);
        tape.Backward(loss);
        nn::AddInto(grads, phi.Grads());
        return double(tape.value(loss)[0]);
      });
  return {std::move(model), std::move(result_log)};
}

ResynthResult TrainResynth(const Manifest& reals, const OmegaSpec& omega,
                           const StageFeatureExtractor& ext,
                           const AlphaWeights& alphas, const TrainConfig& cfg,
                           const SRConfig& sr_config,
                           std::vector<std::string>* inputs_log) {
  for (const auto& e : reals.entries) {
    if (e.label != Label::kReal) {
      throw ContractViolation(
          "re-synthesizer training must only see real images; got fake "
          "entry " + e.path);
    }
  }
  std::vector<Image> images;
  images.reserve(reals.size());
  for (const auto& e : reals.entries) {
    if (inputs_log) inputs_log->push_back(e.path);
    images.push_back(LoadImage(e.path));
  }
  return TrainResynthOnImages(images, omega, ext, alphas, cfg, sr_config);
}

}  // namespace rsd
