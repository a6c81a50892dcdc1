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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "rsd/degrade.h"
#include "rsd/errors.h"
#include "rsd/nn/ops.h"
#include "rsd/seed.h"

namespace rsd {
namespace {

std::string JoinInts(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> SplitInts(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw FormatError("bad integer list '" + s + "'");
    }
  }
  return out;
}

void AddConv(nn::ParamSet<float>& ps, const std::string& name, int out, int in,
             int k, std::mt19937_64& rng, double gain = 1.0) {
  ps.Add(name + ".w", nn::HeNormal<float>({out, in, k, k}, in * k * k, rng, gain));
  ps.Add(name + ".b", nn::Tensor<float>({out}));
}

// Channels and elements-per-channel of a classifier input.
std::pair<int, size_t> NormLayout(const std::vector<int>& shape) {
  if (shape.size() == 1) return {shape[0], 1};
  RSD_REQUIRE(shape.size() == 3, "classifier inputs are [C,H,W] or [N]");
  return {shape[0], size_t(shape[1]) * shape[2]};
}

constexpr int kBlocks = 3;

}  // namespace

nn::ParamSet<float> InitClassifierParams(const ClassifierArchConfig& arch,
                                         uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParamSet<float> ps;
  if (arch.arch == ClassifierArch::kLinear) {
    RSD_REQUIRE(arch.input_shape.size() == 1, "linear classifier takes [N]");
    const int n = arch.input_shape[0];
    ps.Add("fc.w", nn::HeNormal<float>({2, n}, n, rng, 0.5));
    ps.Add("fc.b", nn::Tensor<float>({2}));
    return ps;
  }
  RSD_REQUIRE(arch.input_shape.size() == 3,
              "residual classifier takes [C,H,W] input");
  RSD_REQUIRE(int(arch.widths.size()) == kBlocks, "need three block widths");
  int in = arch.input_shape[0];
  AddConv(ps, "stem", arch.widths[0], in, 3, rng);
  in = arch.widths[0];
  for (int b = 0; b < kBlocks; ++b) {
    const int out = arch.widths[size_t(b)];
    const std::string name = "block" + std::to_string(b);
    AddConv(ps, name + ".conv1", out, in, 3, rng);
    // Residual branches start small so the stack is near-identity.
    AddConv(ps, name + ".conv2", out, out, 3, rng, 0.25);
    if (b > 0 || in != out) AddConv(ps, name + ".proj", out, in, 1, rng);
    in = out;
  }
  ps.Add("fc.w", nn::HeNormal<float>({2, in}, in, rng, 0.5));
  ps.Add("fc.b", nn::Tensor<float>({2}));
  return ps;
}

template <typename T>
nn::NodeId ClassifierForward(nn::Tape<T>& tape, const nn::BoundParams<T>& p,
                             const ClassifierArchConfig& arch, nn::NodeId x,
                             nn::NodeId* last_block) {
  if (arch.arch == ClassifierArch::kLinear) {
    return nn::Linear(tape, x, p("fc.w"), p("fc.b"));
  }
  auto conv = [&](nn::NodeId in, const std::string& name, int stride, int pad) {
    return nn::Conv2d(tape, in, p(name + ".w"), p(name + ".b"), stride, pad);
  };
  nn::NodeId h = nn::Relu(tape, conv(x, "stem", 1, 1));
  for (int b = 0; b < kBlocks; ++b) {
    const std::string name = "block" + std::to_string(b);
    const int stride = b == 0 ? 1 : 2;
    nn::NodeId a = nn::Relu(tape, conv(h, name + ".conv1", stride, 1));
    a = conv(a, name + ".conv2", 1, 1);
    const nn::NodeId shortcut =
        p.Optional(name + ".proj.w") != nn::kNoNode
            ? conv(h, name + ".proj", stride, 0)
            : h;
    h = nn::Relu(tape, nn::Add(tape, a, shortcut));
  }
  if (last_block) *last_block = h;
  return nn::Linear(tape, nn::GlobalAvgPool(tape, h), p("fc.w"), p("fc.b"));
}

template nn::NodeId ClassifierForward<float>(nn::Tape<float>&,
                                             const nn::BoundParams<float>&,
                                             const ClassifierArchConfig&,
                                             nn::NodeId, nn::NodeId*);
template nn::NodeId ClassifierForward<double>(nn::Tape<double>&,
                                              const nn::BoundParams<double>&,
                                              const ClassifierArchConfig&,
                                              nn::NodeId, nn::NodeId*);

Classifier BuildClassifier(int level, std::vector<int> input_shape,
                           uint64_t seed) {
  Classifier c;
  c.level = level;
  c.arch.arch = ClassifierArch::kResidualCnn;
  c.arch.input_shape = std::move(input_shape);
  c.params = InitClassifierParams(c.arch, seed);
  const auto [channels, per] = NormLayout(c.arch.input_shape);
  (void)per;
  c.norm_mean.assign(size_t(channels), 0.0f);
  c.norm_std.assign(size_t(channels), 1.0f);
  return c;
}

Classifier BuildLinearClassifier(int level, int n_features, uint64_t seed) {
  Classifier c;
  c.level = level;
  c.arch.arch = ClassifierArch::kLinear;
  c.arch.input_shape = {n_features};
  c.arch.widths.clear();
  c.params = InitClassifierParams(c.arch, seed);
  c.norm_mean.assign(size_t(n_features), 0.0f);
  c.norm_std.assign(size_t(n_features), 1.0f);
  return c;
}

Checkpoint Classifier::ToCheckpoint(const std::vector<LogEntry>& log) const {
  Checkpoint ck;
  ck.kind = CheckpointKind::kClassifier;
  ck.arch_config = tags;
  ck.arch_config["arch"] =
      arch.arch == ClassifierArch::kLinear ? "linear" : "residual_cnn";
  ck.arch_config["level"] = std::to_string(level);
  ck.arch_config["input_shape"] = JoinInts(arch.input_shape);
  ck.arch_config["widths"] = JoinInts(arch.widths);
  ck.weights = nn::ToNamedArrays(params);
  ck.weights.push_back({"norm.mean", {int64_t(norm_mean.size())}, norm_mean});
  ck.weights.push_back({"norm.std", {int64_t(norm_std.size())}, norm_std});
  ck.training_log = log;
  return ck;
}

Classifier Classifier::FromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::kClassifier) {
    throw KindMismatch(std::string("expected a classifier checkpoint, got ") +
                       CheckpointKindName(ckpt.kind));
  }
  Classifier c;
  const std::string& arch = ckpt.Config("arch");
  if (arch == "linear") {
    c.arch.arch = ClassifierArch::kLinear;
  } else if (arch == "residual_cnn") {
    c.arch.arch = ClassifierArch::kResidualCnn;
  } else {
    throw FormatError("unknown classifier arch '" + arch + "'");
  }
  c.level = ckpt.ConfigInt("level");
  c.arch.input_shape = SplitInts(ckpt.Config("input_shape"));
  c.arch.widths = SplitInts(ckpt.Config("widths"));
  for (const auto& [k, v] : ckpt.arch_config) {
    if (k != "arch" && k != "level" && k != "input_shape" && k != "widths") {
      c.tags[k] = v;
    }
  }
  std::vector<NamedArray> weights;
  for (const auto& w : ckpt.weights) {
    if (w.name == "norm.mean") {
      c.norm_mean = w.values;
    } else if (w.name == "norm.std") {
      c.norm_std = w.values;
    } else {
      weights.push_back(w);
    }
  }
  c.params = nn::FromNamedArrays(weights);
  nn::CheckSameLayout(InitClassifierParams(c.arch, 0), c.params);
  const auto [channels, per] = NormLayout(c.arch.input_shape);
  (void)per;
  if (int(c.norm_mean.size()) != channels || int(c.norm_std.size()) != channels) {
    throw FormatError("classifier normalization stats do not match input");
  }
  return c;
}

nn::Tensor<float> NormalizeInput(const Classifier& c,
                                 const nn::Tensor<float>& input) {
  RSD_REQUIRE(input.shape() == c.arch.input_shape,
              "classifier input " + nn::ShapeString(input.shape()) +
                  " does not match " + nn::ShapeString(c.arch.input_shape));
  const auto [channels, per] = NormLayout(c.arch.input_shape);
  nn::Tensor<float> out = input;
  for (int ch = 0; ch < channels; ++ch) {
    const float m = c.norm_mean[size_t(ch)], s = c.norm_std[size_t(ch)];
    float* p = out.data() + size_t(ch) * per;
    for (size_t i = 0; i < per; ++i) p[i] = (p[i] - m) / s;
  }
  return out;
}

ClassifierTrainResult TrainClassifier(Classifier c,
                                      const std::vector<nn::Tensor<float>>& inputs,
                                      const std::vector<Label>& labels,
                                      const TrainConfig& cfg) {
  RSD_REQUIRE(!inputs.empty() && inputs.size() == labels.size(),
              "classifier training needs one label per input");
  const auto [channels, per] = NormLayout(c.arch.input_shape);
  std::vector<double> sum(size_t(channels), 0.0), sq(size_t(channels), 0.0);
  for (const auto& in : inputs) {
    RSD_REQUIRE(in.shape() == c.arch.input_shape,
                "training input " + nn::ShapeString(in.shape()) +
                    " does not match classifier " +
                    nn::ShapeString(c.arch.input_shape));
    for (int ch = 0; ch < channels; ++ch) {
      const float* p = in.data() + size_t(ch) * per;
      for (size_t i = 0; i < per; ++i) {
        sum[size_t(ch)] += p[i];
        sq[size_t(ch)] += double(p[i]) * p[i];
      }
    }
  }
  const double n = double(inputs.size() * per);
  for (int ch = 0; ch < channels; ++ch) {
    const double mean = sum[size_t(ch)] / n;
    const double var = std::max(0.0, sq[size_t(ch)] / n - mean * mean);
    const double sd = std::sqrt(var);
    c.norm_mean[size_t(ch)] = float(mean);
    c.norm_std[size_t(ch)] = sd > 1e-6 ? float(sd) : 1.0f;
  }
  std::vector<nn::Tensor<float>> normalized;
  normalized.reserve(inputs.size());
  for (const auto& in : inputs) normalized.push_back(NormalizeInput(c, in));

  TrainLog log = nn::TrainSgd(
      c.params, inputs.size(), cfg,
      [&](size_t i, uint64_t, std::vector<nn::Tensor<float>>& grads) {
        nn::Tape<float> tape;
        nn::BoundParams<float> p(tape, c.params, true);
        const nn::NodeId x = tape.Constant(normalized[i]);
        const nn::NodeId logits = ClassifierForward(tape, p, c.arch, x);
        const nn::NodeId loss = nn::SoftmaxCrossEntropy(
            tape, logits, labels[i] == Label::kFake ? kFakeClass : kRealClass);
        tape.Backward(loss);
        nn::AddInto(grads, p.Grads());
        return double(tape.value(loss)[0]);
      });
  return {std::move(c), std::move(log)};
}

std::vector<double> ClassifierLogits(const Classifier& c,
                                     const nn::Tensor<float>& input) {
  nn::Tape<float> tape;
  nn::BoundParams<float> p(tape, c.params, false);
  const nn::NodeId x = tape.Constant(NormalizeInput(c, input));
  const auto& v = tape.value(ClassifierForward(tape, p, c.arch, x));
  return {double(v[0]), double(v[1])};
}

double ProbFakeFromLogits(double real_logit, double fake_logit) {
  // Softmax over two classes, written to stay finite for large gaps.
  return 1.0 / (1.0 + std::exp(real_logit - fake_logit));
}

double Classify(const Classifier& c, const nn::Tensor<float>& input) {
  const auto l = ClassifierLogits(c, input);
  return ProbFakeFromLogits(l[0], l[1]);
}

void BetaWeights::Validate() const {
  RSD_REQUIRE(!betas.empty(), "beta weights are empty");
  double sum = 0.0;
  for (double b : betas) {
    RSD_REQUIRE(b >= 0.0 && std::isfinite(b), "beta weights must be >= 0");
    sum += b;
  }
  RSD_REQUIRE(sum > 0.0, "beta weights must not all be zero");
}

std::vector<int> BetaWeights::ActiveLevels() const {
  std::vector<int> out;
  for (size_t i = 0; i < betas.size(); ++i) {
    if (betas[i] > 0.0) out.push_back(int(i));
  }
  return out;
}

double Fuse(const std::map<int, double>& probs, const BetaWeights& betas) {
  betas.Validate();
  const std::vector<int> levels = betas.ActiveLevels();
  double den = 0.0;
  for (int level : levels) den += betas.betas[size_t(level)];
  // Normalizing the weights first keeps a single active level exact (w = 1).
  double score = 0.0;
  for (int level : levels) {
    auto it = probs.find(level);
    RSD_REQUIRE(it != probs.end(),
                "no probability for weighted level " + std::to_string(level));
    score += betas.betas[size_t(level)] / den * it->second;
  }
  return score;
}

Label Decide(double score, double threshold) {
  return score > threshold ? Label::kFake : Label::kReal;
}

Image ComputeCam(const Classifier& c, const nn::Tensor<float>& input, int cls) {
  RSD_REQUIRE(c.arch.arch == ClassifierArch::kResidualCnn,
              "class activation maps need a convolutional classifier");
  RSD_REQUIRE(cls == kRealClass || cls == kFakeClass, "class must be 0 or 1");
  nn::Tape<float> tape;
  nn::BoundParams<float> p(tape, c.params, false);
  const nn::NodeId x = tape.Variable(NormalizeInput(c, input));
  nn::NodeId block = nn::kNoNode;
  const nn::NodeId logits = ClassifierForward(tape, p, c.arch, x, &block);
  nn::Tensor<float> pick({1, 2});
  pick[size_t(cls)] = 1.0f;
  const nn::NodeId sel = tape.Constant(std::move(pick));
  tape.Backward(nn::Linear(tape, logits, sel, nn::kNoNode));

  const auto& act = tape.value(block);
  const auto& grad = tape.grad(block);
  const int ch = act.dim(0), h = act.dim(1), w = act.dim(2);
  const size_t plane = size_t(h) * w;
  Image cam(1, h, w);
  for (int k = 0; k < ch; ++k) {
    double weight = 0.0;
    if (!grad.empty()) {
      for (size_t i = 0; i < plane; ++i) weight += grad[size_t(k) * plane + i];
    }
    weight /= double(plane);
    for (size_t i = 0; i < plane; ++i) {
      cam.data()[i] += float(weight * act[size_t(k) * plane + i]);
    }
  }
  for (float& v : cam.values()) v = std::max(v, 0.0f);
  // Normalize after resizing so the peak of the returned map is exactly 1.
  Image up = BilinearResize(cam, input.dim(1), input.dim(2));
  float peak = 0.0f;
  for (float v : up.values()) peak = std::max(peak, v);
  if (peak > 0.0f) {
    for (float& v : up.values()) v = std::min(v / peak, 1.0f);
  }
  return up;
}

void DetectorEnsemble::Validate() const {
  betas.Validate();
  RSD_REQUIRE(threshold >= 0.0 && threshold <= 1.0, "threshold must be in [0,1]");
  for (int level : betas.ActiveLevels()) {
    RSD_REQUIRE(classifiers.count(level),
                "no classifier for weighted level " + std::to_string(level));
  }
}

double DetectorEnsemble::Score(const std::map<int, nn::Tensor<float>>& artifacts,
                               std::map<int, double>* per_level) const {
  std::map<int, double> probs;
  for (int level : betas.ActiveLevels()) {
    auto it = artifacts.find(level);
    RSD_REQUIRE(it != artifacts.end(),
                "missing artifact for level " + std::to_string(level));
    probs[level] = Classify(classifiers.at(level), it->second);
  }
  if (per_level) *per_level = probs;
  return Fuse(probs, betas);
}

nlohmann::ordered_json DetectorEnsemble::Descriptor() const {
  nlohmann::ordered_json j;
  std::vector<int> levels;
  nlohmann::ordered_json norm = nlohmann::ordered_json::object();
  for (const auto& [level, c] : classifiers) {
    levels.push_back(level);
    norm[std::to_string(level)] = {{"mean", c.norm_mean}, {"std", c.norm_std}};
  }
  j["levels"] = levels;
  j["betas"] = betas.betas;
  j["threshold"] = threshold;
  j["normalization"] = norm;
  return j;
}

void DetectorEnsemble::Save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [level, c] : classifiers) {
    SaveCheckpoint(c.ToCheckpoint(),
                   dir / ("clf_level" + std::to_string(level) + ".ckpt"));
  }
  std::ofstream out(dir / "ensemble.json", std::ios::trunc);
  if (!out) throw IoError("cannot write ensemble descriptor in " + dir.string());
  out << Descriptor().dump(2) << '\n';
}

DetectorEnsemble DetectorEnsemble::Load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ensemble.json");
  if (!in) throw IoError("cannot read ensemble descriptor in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ensemble.json: ") + e.what());
  }
  DetectorEnsemble ens;
  ens.betas.betas = j.at("betas").get<std::vector<double>>();
  ens.threshold = j.at("threshold").get<double>();
  for (int level : j.at("levels").get<std::vector<int>>()) {
    ens.classifiers[level] = Classifier::FromCheckpoint(LoadCheckpoint(
        dir / ("clf_level" + std::to_string(level) + ".ckpt"),
        CheckpointKind::kClassifier));
  }
  ens.Validate();
  return ens;
}

}  // namespace rsd
