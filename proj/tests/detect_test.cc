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

#include "rsd/detect.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grad_check.h"
#include "rsd/degrade.h"
#include "rsd/errors.h"
#include "rsd/nn/ops.h"
#include "test_util.h"

namespace rsd {
namespace {

using testing::RandomTensor;

Classifier SmallCnn(std::vector<int> shape, uint64_t seed) {
  Classifier c = BuildClassifier(0, std::move(shape), seed);
  return c;
}

TEST(ClassifierTest, TwoLogitsAndSoftmax) {
  const Classifier c = SmallCnn({3, 16, 16}, 1);
  for (uint64_t s = 0; s < 5; ++s) {
    const auto logits = ClassifierLogits(c, RandomTensor<float>({3, 16, 16}, s));
    ASSERT_EQ(logits.size(), 2u);
    const auto p = nn::Softmax(nn::Tensor<double>({2}, logits));
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-6);
    EXPECT_NEAR(Classify(c, RandomTensor<float>({3, 16, 16}, s)), p[1], 1e-9);
  }
}

TEST(ClassifierTest, SeededInitAndArch) {
  const Classifier a = SmallCnn({3, 16, 16}, 4), b = SmallCnn({3, 16, 16}, 4);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].storage(), b.params[i].storage());
  }
  EXPECT_EQ(a.arch.widths, (std::vector<int>{16, 32, 64}));
  EXPECT_EQ(a.params["fc.w"].shape(), (std::vector<int>{2, 64}));
  // Compact stand-in: well under the ~100k budget for 3-channel inputs.
  EXPECT_LT(a.params.NumScalars(), 120000u);
}

TEST(ClassifierTest, ProbabilityFromLogits) {
  EXPECT_EQ(ProbFakeFromLogits(0.0, 0.0), 0.5);
  EXPECT_NEAR(ProbFakeFromLogits(-10.0, 10.0), 1.0, 1e-4);
  for (double a : {-3.0, 0.2, 7.5}) {
    EXPECT_NEAR(ProbFakeFromLogits(a, 1.0) + ProbFakeFromLogits(1.0, a), 1.0, 1e-15);
  }
  EXPECT_EQ(ProbFakeFromLogits(1000.0, -1000.0), 0.0);
  EXPECT_EQ(ProbFakeFromLogits(-1000.0, 1000.0), 1.0);
}

TEST(ClassifierTest, InputShapeChecked) {
  const Classifier c = SmallCnn({3, 16, 16}, 1);
  EXPECT_THROW(Classify(c, nn::Tensor<float>({3, 8, 8})), ArgumentError);
}

TEST(TrainClassifierTest, SeparatesOnePair) {
  const std::vector<nn::Tensor<float>> inputs = {RandomTensor<float>({3, 8, 8}, 1, 0.1),
                                                 RandomTensor<float>({3, 8, 8}, 2, 0.1)};
  const std::vector<Label> labels = {Label::kReal, Label::kFake};
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 2;
  const auto r = TrainClassifier(SmallCnn({3, 8, 8}, 3), inputs, labels, cfg);
  EXPECT_EQ(r.log.steps.size(), 100u);
  EXPECT_LT(Classify(r.classifier, inputs[0]), 0.5);
  EXPECT_GT(Classify(r.classifier, inputs[1]), 0.5);
}

TEST(TrainClassifierTest, StepScheduleDropsAtEpochTen) {
  const std::vector<nn::Tensor<float>> inputs = {RandomTensor<float>({4}, 1),
                                                 RandomTensor<float>({4}, 2)};
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 2;
  const auto r = TrainClassifier(BuildLinearClassifier(0, 4, 1), inputs,
                                 {Label::kReal, Label::kFake}, cfg);
  ASSERT_EQ(r.log.epoch_lr.size(), 12u);
  EXPECT_EQ(r.log.epoch_lr[0], 0.01);
  EXPECT_EQ(r.log.epoch_lr[9], 0.01);
  EXPECT_EQ(r.log.epoch_lr[10], 0.001);
  EXPECT_EQ(r.log.epoch_lr[11], 0.001);
}

TEST(TrainClassifierTest, DeterministicPerSeed) {
  std::vector<nn::Tensor<float>> inputs;
  std::vector<Label> labels;
  for (int i = 0; i < 6; ++i) {
    inputs.push_back(RandomTensor<float>({2, 8, 8}, uint64_t(i)));
    labels.push_back(i % 2 ? Label::kFake : Label::kReal);
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 11;
  const auto a = TrainClassifier(SmallCnn({2, 8, 8}, 1), inputs, labels, cfg);
  const auto b = TrainClassifier(SmallCnn({2, 8, 8}, 1), inputs, labels, cfg);
  EXPECT_EQ(a.log.steps, b.log.steps);
  EXPECT_EQ(a.classifier.norm_mean, b.classifier.norm_mean);
  for (size_t i = 0; i < a.classifier.params.size(); ++i) {
    EXPECT_EQ(a.classifier.params[i].storage(), b.classifier.params[i].storage());
  }
}

TEST(TrainClassifierTest, StandardizesPerChannel) {
  std::vector<nn::Tensor<float>> inputs;
  for (int i = 0; i < 4; ++i) {
    nn::Tensor<float> t({2, 2, 2});
    for (size_t k = 0; k < 4; ++k) t[k] = float(i);           // channel 0: i
    for (size_t k = 4; k < 8; ++k) t[k] = 10.0f + 2.0f * i;  // channel 1
    inputs.push_back(t);
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto r = TrainClassifier(BuildClassifier(0, {2, 2, 2}, 1), inputs,
                                 {Label::kReal, Label::kFake, Label::kReal, Label::kFake},
                                 cfg);
  // Population statistics of {0,1,2,3} and {10,12,14,16}.
  EXPECT_NEAR(r.classifier.norm_mean[0], 1.5, 1e-6);
  EXPECT_NEAR(r.classifier.norm_mean[1], 13.0, 1e-6);
  EXPECT_NEAR(r.classifier.norm_std[0], std::sqrt(1.25), 1e-5);
  EXPECT_NEAR(r.classifier.norm_std[1], std::sqrt(5.0), 1e-5);
}

TEST(ClassifierGradTest, CrossEntropyMatchesFiniteDifferences) {
  ClassifierArchConfig arch;
  arch.input_shape = {2, 8, 8};
  arch.widths = {3, 4, 5};
  nn::ParamSet<double> params = InitClassifierParams(arch, 2).Cast<double>();
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].rank() == 1) params[i] = RandomTensor<double>(params[i].shape(), 30 + i, 0.05);
  }
  const nn::Tensor<double> x = RandomTensor<double>({2, 8, 8}, 3);
  for (int label : {kRealClass, kFakeClass}) {
    const double err = testing::ParamGradientRelError(
        params, [&](nn::Tape<double>& t, const nn::BoundParams<double>& p) {
          return nn::SoftmaxCrossEntropy(
              t, ClassifierForward(t, p, arch, t.Constant(x)), label);
        });
    EXPECT_LT(err, 1e-4) << "label " << label;
  }
}

TEST(ClassifierGradTest, LinearHeadMatchesFiniteDifferences) {
  ClassifierArchConfig arch;
  arch.arch = ClassifierArch::kLinear;
  arch.input_shape = {10};
  nn::ParamSet<double> params = InitClassifierParams(arch, 2).Cast<double>();
  const nn::Tensor<double> x = RandomTensor<double>({10}, 4);
  const double err = testing::ParamGradientRelError(
      params, [&](nn::Tape<double>& t, const nn::BoundParams<double>& p) {
        return nn::SoftmaxCrossEntropy(t, ClassifierForward(t, p, arch, t.Constant(x)),
                                       kFakeClass);
      });
  EXPECT_LT(err, 1e-4);
}

TEST(FuseTest, OneHotIsExact) {
  BetaWeights b;
  b.betas = {1, 0, 0, 0, 0, 0};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    const double p0 = u(rng);
    EXPECT_EQ(Fuse({{0, p0}, {5, u(rng)}}, b), p0);
  }
  b.betas = {0, 0, 0, 0, 0, 3.0};
  EXPECT_EQ(Fuse({{0, 0.1}, {5, 0.7}}, b), 0.7);
}

TEST(FuseTest, DefaultBetasAverage) {
  const BetaWeights b;
  EXPECT_EQ(Fuse({{0, 0.2}, {5, 0.8}}, b), 0.5);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    const double p0 = u(rng), p5 = u(rng);
    EXPECT_NEAR(Fuse({{0, p0}, {5, p5}}, b), (p0 + p5) / 2, 1e-15);
  }
}

TEST(FuseTest, MonotoneInEachProbability) {
  BetaWeights b;
  b.betas = {0.3, 0.1, 0, 0.2, 0, 0.4};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    std::map<int, double> p = {{0, u(rng)}, {1, u(rng)}, {3, u(rng)}, {5, u(rng)}};
    const double before = Fuse(p, b);
    for (int level : {0, 1, 3, 5}) {
      auto q = p;
      q[level] = std::min(1.0, q[level] + u(rng) * 0.3);
      EXPECT_GE(Fuse(q, b), before);
    }
  }
}

TEST(FuseTest, ScalingBetasChangesNoDecision) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  BetaWeights b;
  b.betas = {0.5, 0, 0, 0.25, 0, 0.5};
  for (double c : {1e-3, 0.37, 2.0, 7.0, 1e3}) {
    BetaWeights s = b;
    for (double& v : s.betas) v *= c;
    std::mt19937_64 r(5);
    for (int i = 0; i < 1000; ++i) {
      const std::map<int, double> p = {{0, u(r)}, {3, u(r)}, {5, u(r)}};
      ASSERT_EQ(Decide(Fuse(p, b), 0.5), Decide(Fuse(p, s), 0.5)) << c << " " << i;
    }
  }
}

TEST(FuseTest, Validation) {
  BetaWeights neg;
  neg.betas = {0.5, -0.1};
  EXPECT_THROW(neg.Validate(), ArgumentError);
  BetaWeights zero;
  zero.betas = {0, 0};
  EXPECT_THROW(zero.Validate(), ArgumentError);
  EXPECT_EQ(BetaWeights{}.ActiveLevels(), (std::vector<int>{0, 5}));
  EXPECT_THROW(Fuse({{0, 0.5}}, BetaWeights{}), ArgumentError);
}

TEST(DecideTest, TieRule) {
  EXPECT_EQ(Decide(0.5, 0.5), Label::kReal);
  EXPECT_EQ(Decide(0.51, 0.5), Label::kFake);
  EXPECT_EQ(Decide(0.49, 0.5), Label::kReal);
  EXPECT_EQ(Decide(1e-12, 0.0), Label::kFake);
  EXPECT_EQ(Decide(0.0, 0.0), Label::kReal);
}

TEST(CamTest, RangeAndSize) {
  const Classifier c = SmallCnn({3, 20, 24}, 6);
  for (uint64_t s = 0; s < 4; ++s) {
    const Image cam = ComputeCam(c, RandomTensor<float>({3, 20, 24}, s), kFakeClass);
    EXPECT_EQ(cam.channels(), 1);
    EXPECT_EQ(cam.height(), 20);
    EXPECT_EQ(cam.width(), 24);
    float peak = 0.0f;
    for (float v : cam.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
      peak = std::max(peak, v);
    }
    // Either degenerate (all zero) or peak exactly 1.
    EXPECT_TRUE(peak == 0.0f || peak == 1.0f) << peak;
  }
}

TEST(CamTest, LinearHeadSelectsOneChannel) {
  // Fake logit = mean of channel k of the last block; every location then has
  // gradient 1/(h*w) on channel k only, so the CAM is that channel's map.
  Classifier c = SmallCnn({3, 16, 16}, 7);
  const int k = 5;
  c.params["fc.w"].Fill(0.0f);
  c.params["fc.b"].Fill(0.0f);
  c.params["fc.w"][size_t(64 + k)] = 1.0f;
  const nn::Tensor<float> x = RandomTensor<float>({3, 16, 16}, 8);

  nn::Tape<float> tape;
  nn::BoundParams<float> p(tape, c.params, false);
  nn::NodeId block = nn::kNoNode;
  ClassifierForward(tape, p, c.arch, tape.Constant(NormalizeInput(c, x)), &block);
  const nn::Tensor<float> act = tape.value(block);
  Image chan(1, act.dim(1), act.dim(2));
  for (int y = 0; y < act.dim(1); ++y) {
    for (int xx = 0; xx < act.dim(2); ++xx) {
      chan.at(0, y, xx) = std::max(act.at(k, y, xx), 0.0f);
    }
  }
  Image want = BilinearResize(chan, 16, 16);
  float peak = 0.0f;
  for (float v : want.values()) peak = std::max(peak, v);
  ASSERT_GT(peak, 0.0f);
  const Image cam = ComputeCam(c, x, kFakeClass);
  for (size_t i = 0; i < cam.size(); ++i) {
    EXPECT_NEAR(cam.data()[i], want.data()[i] / peak, 1e-5);
  }
}

TEST(CamTest, RejectsLinearClassifier) {
  const Classifier c = BuildLinearClassifier(0, 8, 1);
  EXPECT_THROW(ComputeCam(c, nn::Tensor<float>({8}), kFakeClass), ArgumentError);
}

TEST(EnsembleTest, ScoreSaveLoad) {
  testing::ScopedDir dir("ensemble");
  DetectorEnsemble e;
  e.classifiers.emplace(0, BuildClassifier(0, {3, 16, 16}, 1));
  e.classifiers.emplace(5, BuildClassifier(5, {8, 2, 2}, 2));
  e.Validate();
  const std::map<int, nn::Tensor<float>> art = {{0, RandomTensor<float>({3, 16, 16}, 3)},
                                                {5, RandomTensor<float>({8, 2, 2}, 4)}};
  std::map<int, double> per;
  const double score = e.Score(art, &per);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_NEAR(score, (per[0] + per[5]) / 2, 1e-15);
  EXPECT_EQ(per[0], Classify(e.classifiers.at(0), art.at(0)));

  e.Save(dir.path());
  const DetectorEnsemble back = DetectorEnsemble::Load(dir.path());
  EXPECT_EQ(back.Score(art), score);
  EXPECT_EQ(back.betas.betas, e.betas.betas);
  EXPECT_EQ(back.threshold, 0.5);
  const auto d = e.Descriptor();
  EXPECT_EQ(d["levels"], nlohmann::json::array({0, 5}));
  EXPECT_TRUE(d.contains("normalization"));
}

TEST(EnsembleTest, MissingWeightedLevelRejected) {
  DetectorEnsemble e;
  e.classifiers.emplace(0, BuildClassifier(0, {3, 16, 16}, 1));
  EXPECT_THROW(e.Validate(), ArgumentError);
}

TEST(ClassifierCheckpointTest, RoundTripKeepsNormalization) {
  Classifier c = BuildClassifier(3, {4, 8, 8}, 9);
  c.norm_mean = {1, 2, 3, 4};
  c.norm_std = {0.5, 1, 2, 4};
  const Classifier back = Classifier::FromCheckpoint(c.ToCheckpoint());
  EXPECT_EQ(back.level, 3);
  EXPECT_EQ(back.norm_mean, c.norm_mean);
  EXPECT_EQ(back.norm_std, c.norm_std);
  const auto x = RandomTensor<float>({4, 8, 8}, 1);
  EXPECT_EQ(Classify(back, x), Classify(c, x));
}

}  // namespace
}  // namespace rsd
