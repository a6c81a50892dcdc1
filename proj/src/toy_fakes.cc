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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "rsd/checkpoint.h"
#include "rsd/errors.h"
#include "rsd/harness.h"
#include "rsd/nn/image_tensor.h"
#include "rsd/nn/ops.h"
#include "rsd/seed.h"

namespace rsd {
namespace {

constexpr int kPseudoFakeFactor = 4;
constexpr int kPseudoFakeLevels = 31;  // 5 bits per channel
constexpr float kLeakySlope = 0.2f;

nn::ParamSet<float> InitGenerator(const GeneratorConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParamSet<float> ps;
  const auto& w = cfg.widths;
  ps.Add("g.fc.w",
         nn::HeNormal<float>({w[0] * 16, cfg.z_dim}, cfg.z_dim, rng, 1.0));
  ps.Add("g.fc.b", nn::Tensor<float>({w[0] * 16}));
  const std::vector<int> chans = {w[0], w[1], w[2], w[3], 3};
  for (int i = 0; i < 4; ++i) {
    const int in = chans[size_t(i)], out = chans[size_t(i) + 1];
    // A stride-2 4x4 transposed conv sums 4 taps per input channel.
    ps.Add("g.up" + std::to_string(i) + ".w",
           nn::HeNormal<float>({in, out, 4, 4}, in * 4, rng, 1.0));
    ps.Add("g.up" + std::to_string(i) + ".b", nn::Tensor<float>({out}));
  }
  return ps;
}

nn::ParamSet<float> InitDiscriminator(uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParamSet<float> ps;
  const std::vector<int> chans = {3, 16, 32, 64, 128};
  for (int i = 0; i < 4; ++i) {
    const int in = chans[size_t(i)], out = chans[size_t(i) + 1];
    ps.Add("d.conv" + std::to_string(i) + ".w",
           nn::HeNormal<float>({out, in, 4, 4}, in * 16, rng, 1.0));
    ps.Add("d.conv" + std::to_string(i) + ".b", nn::Tensor<float>({out}));
  }
  ps.Add("d.fc.w", nn::HeNormal<float>({1, 128 * 16}, 128 * 16, rng, 0.5));
  ps.Add("d.fc.b", nn::Tensor<float>({1}));
  return ps;
}

template <typename T>
nn::NodeId GeneratorForward(nn::Tape<T>& tape, const nn::BoundParams<T>& p,
                            const GeneratorConfig& cfg, nn::NodeId z) {
  nn::NodeId h = nn::Linear(tape, z, p("g.fc.w"), p("g.fc.b"));
  h = nn::Relu(tape, nn::Reshape(tape, h, {cfg.widths[0], 4, 4}));
  for (int i = 0; i < 4; ++i) {
    const std::string name = "g.up" + std::to_string(i);
    h = nn::ConvTranspose2d(tape, h, p(name + ".w"), p(name + ".b"), 2, 1);
    h = i < 3 ? nn::Relu(tape, h) : nn::Sigmoid(tape, h);
  }
  return h;
}

template <typename T>
nn::NodeId DiscriminatorForward(nn::Tape<T>& tape, const nn::BoundParams<T>& p,
                                nn::NodeId x) {
  nn::NodeId h = x;
  for (int i = 0; i < 4; ++i) {
    const std::string name = "d.conv" + std::to_string(i);
    h = nn::Conv2d(tape, h, p(name + ".w"), p(name + ".b"), 2, 1);
    h = nn::LeakyRelu(tape, h, T(kLeakySlope));
  }
  return nn::Linear(tape, h, p("d.fc.w"), p("d.fc.b"));
}

nn::Tensor<float> DrawZ(int z_dim, std::mt19937_64& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  nn::Tensor<float> z({z_dim});
  for (size_t i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return z;
}

void WriteGanLog(const std::filesystem::path& path,
                 const std::vector<LogEntry>& d, const std::vector<LogEntry>& g) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (size_t i = 0; i < d.size(); ++i) {
    nlohmann::ordered_json j;
    j["step"] = d[i].step;
    j["d_loss"] = d[i].loss;
    j["g_loss"] = i < g.size() ? nlohmann::ordered_json(g[i].loss)
                               : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace

Image SyntheticReal(int size, uint64_t seed) {
  RSD_REQUIRE(size >= 8, "synthetic images need size >= 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double n = size;
  Image img(3, size, size);

  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = range(0.25, 0.75);
    gx[c] = range(-0.3, 0.3);
    gy[c] = range(-0.3, 0.3);
  }
  struct Blob {
    double cx, cy, sigma, amp[3];
  };
  std::vector<Blob> blobs(size_t(3 + rng() % 4));
  for (auto& b : blobs) {
    b.cx = range(0, n);
    b.cy = range(0, n);
    b.sigma = range(n / 12, n / 3);
    for (double& a : b.amp) a = range(-0.3, 0.3);
  }
  struct Edge {
    double nx, ny, offset, width, amp[3];
  };
  std::vector<Edge> edges(size_t(1 + rng() % 2));
  for (auto& e : edges) {
    const double theta = range(0, 2 * std::numbers::pi);
    e.nx = std::cos(theta);
    e.ny = std::sin(theta);
    e.offset = range(-0.3, 0.3) * n;
    e.width = range(0.8, 2.5);
    for (double& a : e.amp) a = range(-0.15, 0.15);
  }
  struct Wave {
    double kx, ky, phase, amp[3];
  };
  std::vector<Wave> waves(size_t(2 + rng() % 2));
  for (auto& w : waves) {
    const double cycles = range(2.0, std::max(3.0, n / 8));
    const double theta = range(0, std::numbers::pi);
    w.kx = 2 * std::numbers::pi * cycles * std::cos(theta) / n;
    w.ky = 2 * std::numbers::pi * cycles * std::sin(theta) / n;
    w.phase = range(0, 2 * std::numbers::pi);
    const double a = range(0.02, 0.07);
    for (double& c : w.amp) c = a * range(0.5, 1.0);
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double fx = x / n - 0.5, fy = y / n - 0.5;
      double v[3];
      for (int c = 0; c < 3; ++c) v[c] = base[c] + gx[c] * fx + gy[c] * fy;
      for (const auto& b : blobs) {
        const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        const double g = std::exp(-d2 / (2 * b.sigma * b.sigma));
        for (int c = 0; c < 3; ++c) v[c] += b.amp[c] * g;
      }
      for (const auto& e : edges) {
        const double d = (x - n / 2) * e.nx + (y - n / 2) * e.ny - e.offset;
        const double s = 1.0 / (1.0 + std::exp(-d / e.width));
        for (int c = 0; c < 3; ++c) v[c] += e.amp[c] * s;
      }
      for (const auto& w : waves) {
        const double s = std::sin(w.kx * x + w.ky * y + w.phase);
        for (int c = 0; c < 3; ++c) v[c] += w.amp[c] * s;
      }
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = float(v[c]);
    }
  }
  img = GaussianBlur(img, 0.7, 3);
  Clip01(img);
  return AddGaussianNoise(img, 0.004, DeriveSeed(seed, {0x401}));
}

Image PseudoFake(const Image& img) {
  const int f = kPseudoFakeFactor;
  RSD_REQUIRE(img.height() % f == 0 && img.width() % f == 0,
              "pseudo_fake needs sizes divisible by 4");
  Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const float v = img.at(c, y - y % f, x - x % f);
        out.at(c, y, x) =
            float(std::round(double(v) * kPseudoFakeLevels) / kPseudoFakeLevels);
      }
    }
  }
  return out;
}

GeneratorTrainResult TrainGenerator(const std::vector<Image>& reals,
                                    const GeneratorConfig& cfg, uint64_t seed,
                                    const std::filesystem::path& log_path) {
  cfg.Validate();
  RSD_REQUIRE(!reals.empty(), "generator training needs reals");
  std::vector<nn::Tensor<float>> data;
  data.reserve(reals.size());
  for (const Image& r : reals) {
    RSD_REQUIRE(r.channels() == 3 && r.height() == 64 && r.width() == 64,
                "generator training needs 3x64x64 reals");
    data.push_back(nn::ImageToTensor<float>(r));
  }
  GeneratorTrainResult res;
  res.generator = InitGenerator(cfg, DeriveSeed(seed, {0x6E}));
  nn::ParamSet<float> disc = InitDiscriminator(DeriveSeed(seed, {0xD1}));
  nn::Adam g_opt(cfg.beta1, cfg.beta2), d_opt(cfg.beta1, cfg.beta2);
  std::mt19937_64 rng(DeriveSeed(seed, {0x5EED}));
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  const float inv_batch = 1.0f / float(cfg.batch_size);

  for (int step = 0; step < cfg.steps; ++step) {
    auto d_grads = nn::ZerosLike(disc);
    double d_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const nn::Tensor<float>& real = data[pick(rng)];
      const nn::Tensor<float> z = DrawZ(cfg.z_dim, rng);
      nn::Tape<float> tape;
      nn::BoundParams<float> dp(tape, disc, true);
      nn::BoundParams<float> gp(tape, res.generator, false);
      const nn::NodeId fake = GeneratorForward(tape, gp, cfg, tape.Constant(z));
      const nn::NodeId lr = nn::BceWithLogits(
          tape, DiscriminatorForward(tape, dp, tape.Constant(real)), 1.0f);
      const nn::NodeId lf =
          nn::BceWithLogits(tape, DiscriminatorForward(tape, dp, fake), 0.0f);
      const nn::NodeId loss = nn::Add(tape, lr, lf);
      tape.Backward(loss);
      nn::AddInto(d_grads, dp.Grads());
      d_loss += tape.value(loss)[0];
    }
    d_loss /= cfg.batch_size;
    res.d_loss.push_back({step, d_loss});
    if (!std::isfinite(d_loss)) {
      WriteGanLog(log_path, res.d_loss, res.g_loss);
      throw TrainingDiverged("discriminator loss diverged at step " +
                             std::to_string(step) +
                             (log_path.empty() ? std::string()
                                               : "; log at " + log_path.string()));
    }
    nn::ScaleInPlace(d_grads, inv_batch);
    d_opt.Step(disc, d_grads, cfg.lr);

    auto g_grads = nn::ZerosLike(res.generator);
    double g_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const nn::Tensor<float> z = DrawZ(cfg.z_dim, rng);
      nn::Tape<float> tape;
      nn::BoundParams<float> dp(tape, disc, false);
      nn::BoundParams<float> gp(tape, res.generator, true);
      const nn::NodeId fake = GeneratorForward(tape, gp, cfg, tape.Constant(z));
      const nn::NodeId loss =
          nn::BceWithLogits(tape, DiscriminatorForward(tape, dp, fake), 1.0f);
      tape.Backward(loss);
      nn::AddInto(g_grads, gp.Grads());
      g_loss += tape.value(loss)[0];
    }
    g_loss /= cfg.batch_size;
    res.g_loss.push_back({step, g_loss});
    if (!std::isfinite(g_loss)) {
      WriteGanLog(log_path, res.d_loss, res.g_loss);
      throw TrainingDiverged("generator loss diverged at step " +
                             std::to_string(step));
    }
    nn::ScaleInPlace(g_grads, inv_batch);
    g_opt.Step(res.generator, g_grads, cfg.lr);
  }
  WriteGanLog(log_path, res.d_loss, res.g_loss);
  return res;
}

Image SampleGenerator(const nn::ParamSet<float>& generator,
                      const GeneratorConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::Tape<float> tape;
  nn::BoundParams<float> gp(tape, generator, false);
  const nn::NodeId out =
      GeneratorForward(tape, gp, cfg, tape.Constant(DrawZ(cfg.z_dim, rng)));
  return nn::TensorToImage(tape.value(out));
}

Manifest MakeToyFakes(const Manifest& reals, FakeMode mode,
                      const GeneratorConfig& gen, uint64_t seed,
                      const std::filesystem::path& out_dir) {
  RSD_REQUIRE(!reals.entries.empty(), "no reals to derive fakes from");
  const std::filesystem::path dir = std::filesystem::absolute(out_dir);
  std::filesystem::create_directories(dir);
  Manifest fakes;
  fakes.seed = seed;
  auto emit = [&](const Image& img, size_t i, const char* tag) {
    char name[32];
    std::snprintf(name, sizeof(name), "fake_%05zu.png", i);
    SaveImage(img, dir / name);
    fakes.entries.push_back({(dir / name).string(), Label::kFake, tag});
  };
  if (mode == FakeMode::kPseudoFake) {
    for (size_t i = 0; i < reals.entries.size(); ++i) {
      emit(PseudoFake(LoadImage(reals.entries[i].path)), i, "pseudo_fake");
    }
  } else {
    std::vector<Image> imgs;
    for (const auto& e : reals.entries) imgs.push_back(LoadImage(e.path));
    const GeneratorTrainResult g = TrainGenerator(
        imgs, gen, DeriveSeed(seed, {0x6A4}), dir / "generator_log.jsonl");
    Checkpoint ck;
    ck.kind = CheckpointKind::kGenerator;
    ck.arch_config["z_dim"] = std::to_string(gen.z_dim);
    for (size_t i = 0; i < gen.widths.size(); ++i) {
      ck.arch_config["width" + std::to_string(i)] = std::to_string(gen.widths[i]);
    }
    ck.weights = nn::ToNamedArrays(g.generator);
    for (const auto& e : g.g_loss) ck.training_log.push_back(e);
    SaveCheckpoint(ck, dir / "generator.ckpt");
    for (size_t i = 0; i < reals.entries.size(); ++i) {
      emit(SampleGenerator(g.generator, gen, DeriveSeed(seed, {0x5A3, i})), i,
           "trained_generator");
    }
  }
  SaveManifest(fakes, dir / "manifest.jsonl");
  return fakes;
}

}  // namespace rsd
