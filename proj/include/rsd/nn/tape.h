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

#ifndef RSD_NN_TAPE_H_
#define RSD_NN_TAPE_H_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rsd/nn/tensor.h"

namespace rsd::nn {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

// Reverse-mode tape for a single forward pass. Nodes are appended in
// topological order; Backward() walks them in reverse, calling each node's
// backward closure once its gradient is complete. Parameter nodes refer to
// tensors owned elsewhere and never copy them.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId Constant(Tensor<T> value) { return Leaf(std::move(value), false); }
  NodeId Variable(Tensor<T> value) { return Leaf(std::move(value), true); }
  NodeId Reference(const Tensor<T>* value, bool requires_grad) {
    Node n;
    n.ref = value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
  }

  // Appends an op result. The node requires a gradient iff any input does;
  // otherwise `fn` is dropped.
  NodeId Push(Tensor<T> value, std::vector<NodeId> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    for (NodeId in : inputs) n.requires_grad |= nodes_[size_t(in)].requires_grad;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
  }

  const Tensor<T>& value(NodeId id) const {
    const Node& n = nodes_[size_t(id)];
    return n.ref ? *n.ref : n.value;
  }
  bool requires_grad(NodeId id) const {
    return id != kNoNode && nodes_[size_t(id)].requires_grad;
  }

  // Gradient accumulated so far; empty if none reached the node.
  const Tensor<T>& grad(NodeId id) const { return nodes_[size_t(id)].grad; }

  // Lazily zero-initialized gradient buffer shaped like the node's value.
  Tensor<T>& mutable_grad(NodeId id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.empty() && !value(id).empty()) {
      n.grad = Tensor<T>(value(id).shape());
    }
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  void Backward(NodeId root) {
    RSD_REQUIRE(value(root).size() == 1, "Backward needs a scalar root");
    mutable_grad(root)[0] = T(1);
    for (NodeId id = root; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  NodeId Leaf(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace rsd::nn

#endif  // RSD_NN_TAPE_H_
