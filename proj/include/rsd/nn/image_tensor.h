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

#ifndef RSD_NN_IMAGE_TENSOR_H_
#define RSD_NN_IMAGE_TENSOR_H_

#include "rsd/image.h"
#include "rsd/nn/tensor.h"

namespace rsd::nn {

template <typename T>
Tensor<T> ImageToTensor(const Image& img) {
  Tensor<T> t({img.channels(), img.height(), img.width()});
  const auto v = img.values();
  for (size_t i = 0; i < v.size(); ++i) t[i] = T(v[i]);
  return t;
}

template <typename T>
Image TensorToImage(const Tensor<T>& t) {
  RSD_REQUIRE(t.rank() == 3, "image tensors are [C,H,W]");
  Image img(t.dim(0), t.dim(1), t.dim(2));
  auto v = img.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = float(t[i]);
  return img;
}

}  // namespace rsd::nn

#endif  // RSD_NN_IMAGE_TENSOR_H_
