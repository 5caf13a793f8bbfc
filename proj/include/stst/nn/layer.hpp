// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stst/nn/autograd.hpp"

namespace stst {
class Rng;
}

namespace stst::nn {

enum class LayerKind { Conv, ConvTranspose, Norm, LeakyReLU, ReLU, Tanh, Sigmoid, Dropout, Concat };

std::string_view to_string(LayerKind kind);

enum class Mode { Train, Eval };

/// Per-forward settings. Dropout runs in train mode, or in eval mode when
/// `dropout_in_eval` is set (generator inference).
struct ForwardContext {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;
  bool dropout_in_eval = false;

  bool dropout_active() const { return mode == Mode::Train || dropout_in_eval; }
};

enum class ParamRole { ConvWeight, NormScale, Bias };

struct Parameter {
  std::string name;
  Var var;
  ParamRole role;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  ConvGeometry geometry{};
  bool bias = true;
  double slope = 0.2;        // LeakyReLU
  double drop_prob = 0.5;    // Dropout
};

class Layer {
 public:
  explicit Layer(LayerSpec spec);

  LayerKind kind() const noexcept { return spec_.kind; }
  const LayerSpec& spec() const noexcept { return spec_; }

  /// Concat takes two inputs; every other kind takes one.
  Var forward(std::span<const Var> inputs, const ForwardContext& ctx) const;
  Var forward(const Var& input, const ForwardContext& ctx) const;

  /// Parameters named `<prefix>.weight` / `<prefix>.bias`.
  std::vector<Parameter> parameters(const std::string& prefix) const;

 private:
  LayerSpec spec_;
  Var weight_;
  Var bias_;
};

/// Anything with named parameters in a fixed order.
class Module {
 public:
  virtual ~Module() = default;
  virtual std::vector<Parameter> parameters() const = 0;

  std::size_t parameter_count() const;
  void zero_grad() const;
};

inline constexpr double kInitStd = 0.02;

/// Conv weights ~ N(0, 0.02^2), norm scales ~ N(1, 0.02^2), biases 0; parameters drawn in declaration order.
void init_weights(const Module& model, std::uint64_t seed);

struct AdamConfig {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// Bias-corrected Adam update; gradients are left untouched.
void adam_step(std::span<const Parameter> params, AdamState& state);

}  // namespace stst::nn
