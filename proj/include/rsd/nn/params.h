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

#ifndef RSD_NN_PARAMS_H_
#define RSD_NN_PARAMS_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "rsd/checkpoint.h"
#include "rsd/nn/tape.h"
#include "rsd/nn/tensor.h"

namespace rsd::nn {

// Ordered, named parameter tensors of one network.
template <typename T>
class ParamSet {
 public:
  int Add(const std::string& name, Tensor<T> value) {
    RSD_REQUIRE(!index_.count(name), "duplicate parameter " + name);
    index_[name] = int(tensors_.size());
    names_.push_back(name);
    tensors_.push_back(std::move(value));
    return int(tensors_.size()) - 1;
  }

  int Index(const std::string& name) const {
    auto it = index_.find(name);
    RSD_REQUIRE(it != index_.end(), "unknown parameter " + name);
    return it->second;
  }
  bool Has(const std::string& name) const { return index_.count(name) > 0; }

  size_t size() const { return tensors_.size(); }
  const std::string& name(size_t i) const { return names_[i]; }
  Tensor<T>& operator[](size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](size_t i) const { return tensors_[i]; }
  Tensor<T>& operator[](const std::string& n) { return tensors_[size_t(Index(n))]; }
  const Tensor<T>& operator[](const std::string& n) const {
    return tensors_[size_t(Index(n))];
  }

  size_t NumScalars() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  template <typename U>
  ParamSet<U> Cast() const {
    ParamSet<U> out;
    for (size_t i = 0; i < size(); ++i) out.Add(names_[i], tensors_[i].template Cast<U>());
    return out;
  }

  bool operator==(const ParamSet& o) const {
    return names_ == o.names_ && tensors_ == o.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, int> index_;
};

// Binds every parameter of a set into a tape. With `trainable` false the
// nodes carry no gradient, so frozen networks cost no weight-gradient work.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamSet<T>& params, bool trainable)
      : tape_(tape), params_(params) {
    ids_.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      ids_.push_back(tape.Reference(&params[i], trainable));
    }
  }

  NodeId operator()(const std::string& name) const {
    return ids_[size_t(params_.Index(name))];
  }
  NodeId Optional(const std::string& name) const {
    return params_.Has(name) ? (*this)(name) : kNoNode;
  }

  // Gradients in parameter order; parameters the loss never reached get
  // zeros.
  std::vector<Tensor<T>> Grads() const {
    std::vector<Tensor<T>> out;
    out.reserve(ids_.size());
    for (size_t i = 0; i < ids_.size(); ++i) {
      const auto& g = tape_.grad(ids_[i]);
      out.push_back(g.empty() ? Tensor<T>(params_[i].shape()) : g);
    }
    return out;
  }

 private:
  Tape<T>& tape_;
  const ParamSet<T>& params_;
  std::vector<NodeId> ids_;
};

// He-normal initialization with the given fan-in.
template <typename T>
Tensor<T> HeNormal(std::vector<int> shape, int fan_in, std::mt19937_64& rng,
                   double gain = 1.0) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0,
                                        gain * std::sqrt(2.0 / double(fan_in)));
  for (auto& v : t.values()) v = T(dist(rng));
  return t;
}

std::vector<NamedArray> ToNamedArrays(const ParamSet<float>& params);
ParamSet<float> FromNamedArrays(const std::vector<NamedArray>& arrays);

// Checks that `loaded` has exactly the names and shapes of `reference`.
void CheckSameLayout(const ParamSet<float>& reference,
                     const ParamSet<float>& loaded);

}  // namespace rsd::nn

#endif  // RSD_NN_PARAMS_H_
