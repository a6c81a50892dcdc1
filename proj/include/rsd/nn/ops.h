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

#ifndef RSD_NN_OPS_H_
#define RSD_NN_OPS_H_

#include <utility>
#include <vector>

#include "rsd/nn/tape.h"

namespace rsd::nn {

// All activations are [C, H, W]. Weights follow the usual layouts:
// conv [Cout, Cin, k, k], transposed conv [Cin, Cout, k, k], linear [O, N].
// `bias` may be kNoNode.

template <typename T>
NodeId Conv2d(Tape<T>& tape, NodeId x, NodeId weight, NodeId bias, int stride,
              int pad);

template <typename T>
NodeId ConvTranspose2d(Tape<T>& tape, NodeId x, NodeId weight, NodeId bias,
                       int stride, int pad);

template <typename T>
NodeId Relu(Tape<T>& tape, NodeId x);

template <typename T>
NodeId LeakyRelu(Tape<T>& tape, NodeId x, T slope);

template <typename T>
NodeId Sigmoid(Tape<T>& tape, NodeId x);

template <typename T>
NodeId Add(Tape<T>& tape, NodeId a, NodeId b);

// Channel-wise concatenation of equally sized maps.
template <typename T>
NodeId Concat(Tape<T>& tape, const std::vector<NodeId>& parts);

// 2x2 max pooling with stride 2 (floor on odd extents).
template <typename T>
NodeId MaxPool2(Tape<T>& tape, NodeId x);

// [C*r*r, H, W] -> [C, H*r, W*r]; out(c, y*r+i, x*r+j) = in(c*r*r+i*r+j, y, x).
template <typename T>
NodeId PixelShuffle(Tape<T>& tape, NodeId x, int factor);

// [C, H, W] -> [C].
template <typename T>
NodeId GlobalAvgPool(Tape<T>& tape, NodeId x);

template <typename T>
NodeId Reshape(Tape<T>& tape, NodeId x, std::vector<int> shape);

// Flattens `x` and applies weight [O, N] plus bias [O].
template <typename T>
NodeId Linear(Tape<T>& tape, NodeId x, NodeId weight, NodeId bias);

// mean(|a - b|) over all elements, as a [1] tensor.
template <typename T>
NodeId MeanAbsDiff(Tape<T>& tape, NodeId a, NodeId b);

// sum_k coeff_k * term_k over [1] tensors.
template <typename T>
NodeId WeightedSum(Tape<T>& tape,
                   const std::vector<std::pair<NodeId, T>>& terms);

// Softmax cross-entropy of a [K] logit vector against `label`.
template <typename T>
NodeId SoftmaxCrossEntropy(Tape<T>& tape, NodeId logits, int label);

// Numerically stable binary cross-entropy on a [1] logit.
template <typename T>
NodeId BceWithLogits(Tape<T>& tape, NodeId logit, T target);

// Plain helpers shared by the ops and by callers outside a tape.
template <typename T>
std::vector<T> Softmax(const Tensor<T>& logits);

int ConvOutSize(int in, int kernel, int stride, int pad);

}  // namespace rsd::nn

#endif  // RSD_NN_OPS_H_
