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

#include "rsd/nn/optim.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rsd/seed.h"

namespace rsd {

double TrainConfig::LrAt(int epoch) const {
  double rate = lr;
  int best = -1;
  for (const auto& [e, v] : lr_schedule) {
    if (e <= epoch && e >= best) {
      best = e;
      rate = v;
    }
  }
  return rate;
}

void TrainConfig::Validate() const {
  RSD_REQUIRE(epochs >= 1, "epochs must be >= 1");
  RSD_REQUIRE(batch_size >= 1, "batch_size must be >= 1");
  RSD_REQUIRE(lr > 0.0, "lr must be > 0");
  RSD_REQUIRE(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  for (const auto& [e, v] : lr_schedule) {
    RSD_REQUIRE(e >= 0 && v > 0.0, "bad lr_schedule entry");
  }
}

}  // namespace rsd

namespace rsd::nn {

std::vector<NamedArray> ToNamedArrays(const ParamSet<float>& params) {
  std::vector<NamedArray> out;
  for (size_t i = 0; i < params.size(); ++i) {
    NamedArray a;
    a.name = params.name(i);
    for (int d : params[i].shape()) a.shape.push_back(d);
    a.values = params[i].storage();
    out.push_back(std::move(a));
  }
  return out;
}

ParamSet<float> FromNamedArrays(const std::vector<NamedArray>& arrays) {
  ParamSet<float> out;
  for (const auto& a : arrays) {
    std::vector<int> shape(a.shape.begin(), a.shape.end());
    out.Add(a.name, Tensor<float>(std::move(shape), a.values));
  }
  return out;
}

void CheckSameLayout(const ParamSet<float>& reference,
                     const ParamSet<float>& loaded) {
  if (reference.size() != loaded.size()) {
    throw FormatError("checkpoint has " + std::to_string(loaded.size()) +
                      " arrays, architecture expects " +
                      std::to_string(reference.size()));
  }
  for (size_t i = 0; i < reference.size(); ++i) {
    if (reference.name(i) != loaded.name(i) ||
        reference[i].shape() != loaded[i].shape()) {
      throw FormatError("checkpoint array " + loaded.name(i) + " " +
                        ShapeString(loaded[i].shape()) +
                        " does not match architecture " + reference.name(i) +
                        " " + ShapeString(reference[i].shape()));
    }
  }
}

std::vector<Tensor<float>> ZerosLike(const ParamSet<float>& params) {
  std::vector<Tensor<float>> out;
  out.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    out.emplace_back(params[i].shape());
  }
  return out;
}

void AddInto(std::vector<Tensor<float>>& acc,
             const std::vector<Tensor<float>>& g) {
  for (size_t i = 0; i < acc.size(); ++i) {
    float* a = acc[i].data();
    const float* b = g[i].data();
    for (size_t k = 0; k < acc[i].size(); ++k) a[k] += b[k];
  }
}

void ScaleInPlace(std::vector<Tensor<float>>& g, float s) {
  for (auto& t : g) {
    for (auto& v : t.values()) v *= s;
  }
}

void SgdMomentum::Step(ParamSet<float>& params,
                       const std::vector<Tensor<float>>& grads, double lr) {
  if (velocity_.empty()) velocity_ = ZerosLike(params);
  const float mu = float(momentum_);
  const float rate = float(lr);
  for (size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    float* v = velocity_[i].data();
    const float* g = grads[i].data();
    for (size_t k = 0; k < params[i].size(); ++k) {
      v[k] = mu * v[k] + g[k];
      p[k] -= rate * v[k];
    }
  }
}

void Adam::Step(ParamSet<float>& params,
                const std::vector<Tensor<float>>& grads, double lr) {
  if (m_.empty()) {
    m_ = ZerosLike(params);
    v_ = ZerosLike(params);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const float* g = grads[i].data();
    for (size_t k = 0; k < params[i].size(); ++k) {
      m[k] = float(beta1_ * m[k] + (1.0 - beta1_) * g[k]);
      v[k] = float(beta2_ * v[k] + (1.0 - beta2_) * double(g[k]) * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= float(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

TrainLog TrainSgd(ParamSet<float>& params, size_t n_samples,
                  const TrainConfig& cfg, const SampleStepFn& step) {
  cfg.Validate();
  RSD_REQUIRE(n_samples > 0, "no training samples");
  SgdMomentum opt(cfg.momentum);
  TrainLog log;
  std::vector<size_t> order(n_samples);
  int64_t step_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.LrAt(epoch);
    log.epoch_lr.push_back(lr);
    std::iota(order.begin(), order.end(), size_t(0));
    std::mt19937_64 rng(DeriveSeed(cfg.seed, {0x5A4D, uint64_t(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < n_samples; start += size_t(cfg.batch_size)) {
      const size_t end = std::min(n_samples, start + size_t(cfg.batch_size));
      std::vector<Tensor<float>> grads = ZerosLike(params);
      double loss = 0.0;
      for (size_t k = start; k < end; ++k) {
        const uint64_t s = DeriveSeed(cfg.seed, {uint64_t(epoch), uint64_t(k)});
        loss += step(order[k], s, grads);
      }
      const double count = double(end - start);
      loss /= count;
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at step " +
                               std::to_string(step_index) + " (epoch " +
                               std::to_string(epoch) + ")");
      }
      ScaleInPlace(grads, float(1.0 / count));
      opt.Step(params, grads, lr);
      log.steps.push_back({step_index++, loss});
    }
  }
  return log;
}

}  // namespace rsd::nn
