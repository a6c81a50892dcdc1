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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "grad_check.h"
#include "rsd/errors.h"
#include "rsd/nn/image_tensor.h"
#include "rsd/nn/ops.h"
#include "test_util.h"

namespace rsd {
namespace {

using testing::RandomImage;
using testing::RandomTensor;

StageFeatureExtractor SmallExtractor(int n_stages, uint64_t seed = 1) {
  ExtractorConfig cfg;
  cfg.n_stages = n_stages;
  cfg.widths = std::vector<int>(size_t(n_stages), 4);
  return StageFeatureExtractor::Build(cfg, seed);
}

SRConfig TinySr() {
  SRConfig c;
  c.n_blocks = 1;
  c.base_channels = 4;
  c.growth = 2;
  c.block_layers = 2;
  c.sr_factor = 2;
  return c;
}

SRConfig TinyFour() {
  SRConfig c = TinySr();
  c.sr_factor = 4;
  return c;
}

TEST(SrModelTest, UpscalesByFour) {
  const SRModel m = SRModel::Build(SRConfig{}, 1);
  const Image out = m.Reconstruct(RandomImage(3, 16, 16, 1));
  EXPECT_EQ(out.channels(), 3);
  EXPECT_EQ(out.height(), 64);
  EXPECT_EQ(out.width(), 64);
  const Image rect = m.Reconstruct(RandomImage(3, 5, 7, 2));
  EXPECT_EQ(rect.height(), 20);
  EXPECT_EQ(rect.width(), 28);
}

TEST(SrModelTest, SeededInit) {
  const SRModel a = SRModel::Build(SRConfig{}, 5), b = SRModel::Build(SRConfig{}, 5);
  for (size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].storage(), b.params()[i].storage());
  }
  const Image low = RandomImage(3, 8, 8, 3);
  EXPECT_EQ(a.Reconstruct(low), a.Reconstruct(low));
}

TEST(SrModelTest, DefaultParameterCount) {
  // shallow 3x3 conv; per block: densely connected 3x3 convs (input grows by
  // `growth` per layer) then a 1x1 fusion back to base width; global 3x3
  // conv; two sub-pixel steps (3x3 conv to 4x width, widths 32 then 16);
  // output 3x3 conv. Every conv has a bias.
  auto conv = [](long out, long in, long k) { return out * in * k * k + out; };
  const long c = 32, g = 16, layers = 3, blocks = 4;
  long expected = conv(c, 3, 3);
  for (long b = 0; b < blocks; ++b) {
    for (long l = 0; l < layers; ++l) expected += conv(g, c + l * g, 3);
    expected += conv(c, c + layers * g, 1);
  }
  expected += conv(c, c, 3);
  expected += conv(4 * 32, c, 3) + conv(4 * 16, 32, 3);
  expected += conv(3, 16, 3);
  EXPECT_EQ(expected, 159571);
  EXPECT_EQ(long(SRModel::Build(SRConfig{}, 1).params().NumScalars()), expected);
}

TEST(SrModelTest, CheckpointRoundTrip) {
  const SRModel m = SRModel::Build(TinySr(), 3);
  const SRModel back = SRModel::FromCheckpoint(m.ToCheckpoint());
  const Image low = RandomImage(3, 6, 6, 4);
  EXPECT_EQ(back.Reconstruct(low), m.Reconstruct(low));
  Checkpoint wrong = m.ToCheckpoint();
  wrong.kind = CheckpointKind::kExtractor;
  EXPECT_THROW(SRModel::FromCheckpoint(wrong), KindMismatch);
}

TEST(PixelLossTest, Examples) {
  const Image a = RandomImage(3, 8, 8, 1);
  EXPECT_EQ(PixelLoss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(PixelLoss(Image(3, 4, 4, 0.5f), Image(3, 4, 4, 0.25f)), 0.25);
  const Image b = RandomImage(3, 8, 8, 2);
  double s = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) s += std::abs(double(a.at(c, y, x)) - b.at(c, y, x));
    }
  }
  EXPECT_NEAR(PixelLoss(a, b), s / 192, 1e-7);
  EXPECT_THROW(PixelLoss(a, Image(3, 4, 4)), ArgumentError);
}

TEST(PerceptualLossTest, PixelOnlyAlphasReduceToPixelLoss) {
  const auto ext = StageFeatureExtractor::Build(ExtractorConfig{}, 1);
  AlphaWeights e0;
  e0.alphas = {1, 0, 0, 0, 0, 0};
  for (int i = 0; i < 100; ++i) {
    const Image x = RandomImage(3, 32, 32, uint64_t(2 * i));
    const Image y = RandomImage(3, 32, 32, uint64_t(2 * i + 1));
    ASSERT_NEAR(PerceptualLoss(x, y, ext, e0), PixelLoss(x, y), 1e-6) << i;
  }
}

TEST(PerceptualLossTest, ZeroForIdenticalImages) {
  const auto ext = StageFeatureExtractor::Build(ExtractorConfig{}, 2);
  const Image x = RandomImage(3, 32, 32, 3);
  EXPECT_EQ(PerceptualLoss(x, x, ext, AlphaWeights{}), 0.0);
}

TEST(PerceptualLossTest, HomogeneousInAlphas) {
  const auto ext = StageFeatureExtractor::Build(ExtractorConfig{}, 3);
  const Image x = RandomImage(3, 32, 32, 4), y = RandomImage(3, 32, 32, 5);
  AlphaWeights a, twice;
  for (double& v : twice.alphas) v *= 2;
  const double l = PerceptualLoss(x, y, ext, a);
  EXPECT_GT(l, 0.0);
  EXPECT_NEAR(PerceptualLoss(x, y, ext, twice), 2 * l, 1e-6 * l);
}

TEST(PerceptualLossTest, AlphaValidation) {
  const auto ext = StageFeatureExtractor::Build(ExtractorConfig{}, 3);
  const Image x = RandomImage(3, 32, 32, 4);
  AlphaWeights short_a;
  short_a.alphas = {1, 0, 0};
  EXPECT_THROW(PerceptualLoss(x, x, ext, short_a), ArgumentError);
  AlphaWeights zeros;
  zeros.alphas = {0, 0, 0, 0, 0, 0};
  EXPECT_THROW(PerceptualLoss(x, x, ext, zeros), ArgumentError);
  AlphaWeights neg;
  neg.alphas = {1, -1, 0, 0, 0, 0};
  EXPECT_THROW(PerceptualLoss(x, x, ext, neg), ArgumentError);
}

// Hierarchical loss through a three-layer toy network on an 8x8 input.
TEST(PerceptualGradTest, ToyNetworkMatchesFiniteDifferences) {
  const auto ext = SmallExtractor(3, 4);
  const nn::ParamSet<double> theta = ext.params().Cast<double>();
  const ExtractorConfig ext_cfg = ext.config();
  AlphaWeights a;
  a.alphas = {1.0, 0.5, 0.25, 1.0};
  const nn::Tensor<double> low = RandomTensor<double>({3, 8, 8}, 5, 0.5);
  const nn::Tensor<double> target = RandomTensor<double>({3, 16, 16}, 6, 0.5);
  testing::GraphFn f = [&](nn::Tape<double>& t, const std::vector<nn::NodeId>& v) {
    nn::BoundParams<double> tb(t, theta, false);
    nn::NodeId h = nn::Relu(t, nn::Conv2d(t, t.Constant(low), v[0], v[1], 1, 1));
    h = nn::PixelShuffle(t, nn::Relu(t, nn::Conv2d(t, h, v[2], v[3], 1, 1)), 2);
    const nn::NodeId rec = nn::Conv2d(t, h, v[4], v[5], 1, 1);
    return PerceptualLossGraph(t, t.Constant(target), rec, tb, ext_cfg, a);
  };
  const double err = testing::GradientRelError(
      f, {RandomTensor<double>({4, 3, 3, 3}, 7, 0.3), RandomTensor<double>({4}, 8, 0.1),
          RandomTensor<double>({8, 4, 3, 3}, 9, 0.3), RandomTensor<double>({8}, 10, 0.1),
          RandomTensor<double>({3, 2, 3, 3}, 11, 0.3), RandomTensor<double>({3}, 12, 0.1)});
  EXPECT_LT(err, 1e-4);
}

TEST(PerceptualGradTest, SrNetworkMatchesFiniteDifferences) {
  const auto ext = SmallExtractor(3, 5);
  const nn::ParamSet<double> theta = ext.params().Cast<double>();
  const SRConfig cfg = TinySr();
  nn::ParamSet<double> phi = InitSrParams(cfg, 6).Cast<double>();
  // Nonzero biases so no activation sits exactly on a ReLU kink.
  for (size_t i = 0; i < phi.size(); ++i) {
    if (phi[i].rank() == 1) phi[i] = RandomTensor<double>(phi[i].shape(), 20 + i, 0.05);
  }
  const nn::Tensor<double> low = RandomTensor<double>({3, 8, 8}, 7, 0.5);
  const nn::Tensor<double> target = RandomTensor<double>({3, 16, 16}, 8, 0.5);
  AlphaWeights a;
  a.alphas = {1.0, 1.0 / 32, 1.0 / 16, 1.0};
  const double err = testing::ParamGradientRelError(
      phi, [&](nn::Tape<double>& t, const nn::BoundParams<double>& pb) {
        nn::BoundParams<double> tb(t, theta, false);
        const nn::NodeId rec = SrForward(t, pb, cfg, t.Constant(low));
        return PerceptualLossGraph(t, t.Constant(target), rec, tb, ext.config(), a);
      });
  EXPECT_LT(err, 1e-4);
}

TEST(TrainResynthTest, OverfitsOneImage) {
  const auto ext = StageFeatureExtractor::Build(ExtractorConfig{}, 1);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 1;
  cfg.lr = 0.01;
  cfg.lr_schedule = {};
  cfg.seed = 3;
  const auto r = TrainResynthOnImages({RandomImage(3, 32, 32, 7)}, OmegaSpec{}, ext,
                                      AlphaWeights{}, cfg);
  ASSERT_EQ(r.log.steps.size(), 50u);
  EXPECT_LT(r.log.steps.back().loss, r.log.steps.front().loss);
  for (const auto& e : r.log.steps) EXPECT_GE(e.loss, 0.0);
}

TEST(TrainResynthTest, LogLengthAndDeterminism) {
  const auto ext = SmallExtractor(5);
  std::vector<Image> reals;
  for (int i = 0; i < 5; ++i) reals.push_back(RandomImage(3, 32, 32, uint64_t(i)));
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 9;
  OmegaSpec omega;
  omega.mode = OmegaMode::kSRD;
  const auto a = TrainResynthOnImages(reals, omega, ext, AlphaWeights{}, cfg, TinyFour());
  const auto b = TrainResynthOnImages(reals, omega, ext, AlphaWeights{}, cfg, TinyFour());
  EXPECT_EQ(a.log.steps.size(), 6u);  // ceil(5 / 2) per epoch
  EXPECT_EQ(a.log.steps, b.log.steps);
  for (size_t i = 0; i < a.model.params().size(); ++i) {
    EXPECT_EQ(a.model.params()[i].storage(), b.model.params()[i].storage());
  }
}

TEST(TrainResynthTest, ExtractorStaysFrozen) {
  const auto ext = SmallExtractor(5);
  const nn::ParamSet<float> before = ext.params();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  TrainResynthOnImages({RandomImage(3, 32, 32, 1), RandomImage(3, 32, 32, 2)},
                       OmegaSpec{}, ext, AlphaWeights{}, cfg, TinyFour());
  for (size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(before[i].storage(), ext.params()[i].storage());
  }
}

TEST(TrainResynthTest, RejectsFakeManifestEntries) {
  Manifest m;
  m.entries.push_back({"/nonexistent/real.png", Label::kReal, "real"});
  m.entries.push_back({"/nonexistent/fake.png", Label::kFake, "pseudo_fake"});
  const auto ext = SmallExtractor(5);
  EXPECT_THROW(TrainResynth(m, OmegaSpec{}, ext, AlphaWeights{}, TrainConfig{}),
               ContractViolation);
}

}  // namespace
}  // namespace rsd
