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

#ifndef RSD_NN_TENSOR_H_
#define RSD_NN_TENSOR_H_

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rsd/errors.h"

namespace rsd::nn {

// Dense row-major tensor of small rank. Activations are [C, H, W]; conv
// weights are [Cout, Cin, k, k]; vectors are [N].
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)) {
    size_t n = 1;
    for (int d : shape_) {
      RSD_REQUIRE(d >= 0, "negative tensor extent");
      n *= size_t(d);
    }
    data_.assign(n, fill);
  }
  Tensor(std::vector<int> shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    size_t n = 1;
    for (int d : shape_) n *= size_t(d);
    RSD_REQUIRE(n == data_.size(), "tensor shape/value count mismatch");
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }
  T& operator[](size_t i) { return data_[i]; }
  T operator[](size_t i) const { return data_[i]; }

  // Indexing for rank-3 activations.
  T& at(int c, int y, int x) {
    return data_[(size_t(c) * shape_[1] + y) * shape_[2] + x];
  }
  T at(int c, int y, int x) const {
    return data_[(size_t(c) * shape_[1] + y) * shape_[2] + x];
  }

  void Fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void Reshape(std::vector<int> shape) {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    RSD_REQUIRE(n == data_.size(), "reshape changes element count");
    shape_ = std::move(shape);
  }

  template <typename U>
  Tensor<U> Cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  T Sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

std::string ShapeString(const std::vector<int>& shape);

}  // namespace rsd::nn

#endif  // RSD_NN_TENSOR_H_
