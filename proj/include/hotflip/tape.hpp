// Copyright 2026 The HotFlip Authors
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

#ifndef HOTFLIP_TAPE_HPP
#define HOTFLIP_TAPE_HPP

#include <functional>
#include <vector>

#include "hotflip/tensor.hpp"

namespace hotflip::diff {

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

// Eager reverse-mode tape over dense double tensors. Each op computes its
// value immediately and, when recording, registers a closure that accumulates
// input gradients from the output gradient. backward() replays closures in
// exact reverse recording order and then the record is consumed.
//
// A Tape is confined to one logical thread. Values are immutable; gradients
// live in per-node buffers allocated lazily during backward().
class Tape {
 public:
  Tape() = default;
  /// recording=false evaluates forward only; backward() is then illegal.
  explicit Tape(bool recording) : recording_(recording) {}

  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return node(v).value; }
  /// Gradient of the last backward() loss w.r.t. v; zeros if v never
  /// influenced the loss.
  Tensor grad(Var v) const;

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);

  /// Sum of all entries -> scalar.
  Var sum(Var a);

  /// [p x q] . [q x r] -> [p x r]
  Var matmul(Var a, Var b);

  /// x:[q], w:[q x r], b:[r] -> [r]  (bias-add is the only broadcast)
  Var affine(Var x, Var w, Var b);

  /// Valid temporal convolution. input:[T x C], kernels:[W x C x O]
  /// -> [T-W+1 x O]. Throws ShapeError when T < W.
  Var conv1d(Var input, Var kernels);

  /// [T x C] -> [C]; ties broken toward the lowest time index.
  Var max_over_time(Var a);

  /// Concatenate rank-1 tensors.
  Var concat(const std::vector<Var>& parts);

  /// -log softmax(logits)[label] -> scalar. logits rank-1.
  Var softmax_cross_entropy(Var logits, int label);

  /// Softmax probabilities of a rank-1 logits value (no tape node; helper
  /// for prediction readout).
  static std::vector<double> softmax(const Tensor& logits);

  void backward(Var loss);

  bool recording() const { return recording_; }
  bool consumed() const { return consumed_; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;            // empty until touched by backward
    std::function<void(Tape&)> back;     // empty for leaves / non-recording
  };

  const Node& node(Var v) const;
  Var push(Tensor value, std::function<void(Tape&)> back);
  std::vector<double>& grad_buf(int id);
  const std::vector<double>* grad_if_any(int id) const;
  void check_same_shape(Var a, Var b, const char* op) const;

  Var map_unary(Var a, double (*f)(double), double (*df)(double x, double y));

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
};

}  // namespace hotflip::diff

#endif  // HOTFLIP_TAPE_HPP
