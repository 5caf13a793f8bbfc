// SPDX-License-Identifier: Apache-2.0
#include "stst/nn/layer.hpp"

#include <cmath>

#include "stst/error.hpp"
#include "stst/rng.hpp"

namespace stst::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::ConvTranspose: return "ConvTranspose";
    case LayerKind::Norm: return "Norm";
    case LayerKind::LeakyReLU: return "LeakyReLU";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Tanh: return "Tanh";
    case LayerKind::Sigmoid: return "Sigmoid";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Concat: return "Concat";
  }
  return "?";
}

Layer::Layer(LayerSpec spec) : spec_(spec) {
  const auto k = spec_.geometry.kernel;
  switch (spec_.kind) {
    case LayerKind::Conv:
    case LayerKind::ConvTranspose:
      if (spec_.in_channels == 0 || spec_.out_channels == 0) {
        throw Error(ErrorKind::Config, std::string(to_string(spec_.kind)) + " needs channel counts >= 1");
      }
      weight_ = Var::parameter(Tensor(spec_.kind == LayerKind::Conv ? Shape{spec_.out_channels, spec_.in_channels, k, k}
                                                                    : Shape{spec_.in_channels, spec_.out_channels, k, k}));
      if (spec_.bias) bias_ = Var::parameter(Tensor({spec_.out_channels}));
      break;
    case LayerKind::Norm:
      if (spec_.in_channels == 0) throw Error(ErrorKind::Config, "Norm needs a channel count >= 1");
      weight_ = Var::parameter(Tensor({spec_.in_channels}, 1.0));
      bias_ = Var::parameter(Tensor({spec_.in_channels}, 0.0));
      break;
    default:
      break;
  }
}

Var Layer::forward(const Var& input, const ForwardContext& ctx) const {
  return forward(std::span<const Var>(&input, 1), ctx);
}

Var Layer::forward(std::span<const Var> inputs, const ForwardContext& ctx) const {
  const std::size_t expected = spec_.kind == LayerKind::Concat ? 2 : 1;
  if (inputs.size() != expected) {
    throw Error(ErrorKind::ShapeMismatch, std::string(to_string(spec_.kind)) + " expects " + std::to_string(expected) +
                                              " input(s), got " + std::to_string(inputs.size()));
  }
  const Var& x = inputs[0];
  switch (spec_.kind) {
    case LayerKind::Conv:
      return conv2d(x, weight_, bias_, spec_.geometry);
    case LayerKind::ConvTranspose:
      return conv_transpose2d(x, weight_, bias_, spec_.geometry);
    case LayerKind::Norm:
      return instance_norm(x, weight_, bias_);
    case LayerKind::LeakyReLU:
      return leaky_relu(x, spec_.slope);
    case LayerKind::ReLU:
      return relu(x);
    case LayerKind::Tanh:
      return tanh(x);
    case LayerKind::Sigmoid:
      return sigmoid(x);
    case LayerKind::Dropout:
      if (!ctx.dropout_active()) return x;
      if (!ctx.rng) throw Error(ErrorKind::Config, "dropout requires a random generator in the forward context");
      return dropout(x, spec_.drop_prob, *ctx.rng);
    case LayerKind::Concat:
      return concat_channels(inputs[0], inputs[1]);
  }
  return x;
}

std::vector<Parameter> Layer::parameters(const std::string& prefix) const {
  std::vector<Parameter> out;
  if (weight_.defined()) {
    out.push_back({prefix + ".weight", weight_, spec_.kind == LayerKind::Norm ? ParamRole::NormScale : ParamRole::ConvWeight});
  }
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_, ParamRole::Bias});
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.value().size();
  return n;
}

void Module::zero_grad() const {
  for (auto p : parameters()) p.var.zero_grad();
}

void init_weights(const Module& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto p : model.parameters()) {
    auto data = p.var.mutable_value().data();
    switch (p.role) {
      case ParamRole::ConvWeight:
        for (double& v : data) v = rng.normal(0.0, kInitStd);
        break;
      case ParamRole::NormScale:
        for (double& v : data) v = rng.normal(1.0, kInitStd);
        break;
      case ParamRole::Bias:
        for (double& v : data) v = 0.0;
        break;
    }
  }
}

void adam_step(std::span<const Parameter> params, AdamState& state) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p.var.shape(), 0.0);
      state.v.emplace_back(p.var.shape(), 0.0);
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var var = params[k].var;
    auto& value = var.mutable_value();
    const auto& grad = var.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.shape() != value.shape()) {
      throw Error(ErrorKind::ShapeMismatch, "Adam moment shape differs for parameter " + params[k].name);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace stst::nn
