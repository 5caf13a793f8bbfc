// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Every op returns a Var whose node keeps its inputs alive, so the graph can
// be replayed by backward() any number of times. Leaf gradients accumulate
// (+=) across calls; interior gradients are scratch space reset on each call.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stst/nn/tensor.hpp"

namespace stst {
class Rng;
}

namespace stst::nn {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var leaf(Tensor value, bool requires_grad = false);
  static Var parameter(Tensor value) { return leaf(std::move(value), true); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimisers and checkpoint loading.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_recorded_forward() const noexcept { return node_ && static_cast<bool>(node_->backward_fn); }

  /// Gradient slot; allocated (zeroed) on first access.
  Tensor& grad() { return node_->ensure_grad(); }
  const Tensor& grad() const { return node_->ensure_grad(); }
  void zero_grad();

  /// Scalar value of a one-element tensor.
  double item() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Propagates `seed` (same shape as root) back through the recorded graph.
void backward(const Var& root, const Tensor& seed);
/// Scalar root; seed = 1.
void backward(const Var& root);

/// Same value, no history.
Var detach(const Var& v);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

// ---- ops -----------------------------------------------------------------

struct ConvGeometry {
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t padding = 1;
};

/// Output spatial size of a convolution: floor((in + 2p - k)/s) + 1.
std::size_t conv_output_size(std::size_t in, const ConvGeometry& g);
/// Output spatial size of a transposed convolution: (in - 1)s - 2p + k.
std::size_t conv_transpose_output_size(std::size_t in, const ConvGeometry& g);

/// x: (N, Cin, H, W), weight: (Cout, Cin, k, k), bias: (Cout) or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);
/// x: (N, Cin, H, W), weight: (Cin, Cout, k, k), bias: (Cout) or undefined. Adjoint of conv2d.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);
/// Per-sample, per-channel normalisation over the spatial dims with affine scale/shift (C).
Var instance_norm(const Var& x, const Var& scale, const Var& shift, double eps = 1e-5);

Var leaky_relu(const Var& x, double slope);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
/// Inverted dropout: zeroes with probability p, scales survivors by 1/(1-p).
Var dropout(const Var& x, double p, Rng& rng);
/// Concatenation along the channel axis of two rank-4 tensors.
Var concat_channels(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var mean(const Var& x);
/// sum(x * w) for a constant w of the same shape.
Var weighted_sum(const Var& x, const Tensor& w);
/// mean |a - b|.
Var l1_mean(const Var& a, const Var& b);
/// Mean sigmoid cross-entropy of logits against a constant target in [0,1].
Var bce_with_logits_mean(const Var& logits, double target);

}  // namespace stst::nn
