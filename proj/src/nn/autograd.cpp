// SPDX-License-Identifier: Apache-2.0
#include "stst/nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "stst/error.hpp"
#include "stst/kernels.hpp"
#include "stst/rng.hpp"

namespace stst::nn {

using kernels::GemmShape;
using kernels::Transpose;

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (node_) node_->ensure_grad().fill(0.0);
}

double Var::item() const {
  if (value().size() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
  return value()[0];
}

namespace {

thread_local bool t_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() noexcept { return t_grad_enabled; }

namespace {

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn, const char* op) {
  if (!value.all_finite()) {
    throw Error(ErrorKind::NaNLoss, std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (t_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

// Gradient slot of input i when it participates in differentiation.
Tensor* input_grad(Node& self, std::size_t i) {
  if (i >= self.inputs.size() || !self.inputs[i] || !self.inputs[i]->requires_grad) return nullptr;
  return &self.inputs[i]->ensure_grad();
}

void require_rank4(const Var& x, const char* op) {
  if (x.shape().size() != 4) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + " expects a rank-4 input, got " + shape_string(x.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
}

struct Im2ColGeometry {
  std::size_t channels, height, width;  // image
  std::size_t out_h, out_w;             // sliding-window grid
  ConvGeometry g;
  std::size_t rows() const { return channels * g.kernel * g.kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*k + ki)*k + kj][oh*ow + ...] = image[c][oh*s - p + ki][ow*s - p + kj] (zero outside).
void im2col(const double* image, const Im2ColGeometry& geo, double* cols) {
  const auto k = geo.g.kernel;
  const auto s = geo.g.stride;
  const auto p = static_cast<std::ptrdiff_t>(geo.g.padding);
  for (std::size_t c = 0; c < geo.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * geo.cols();
        for (std::size_t oh = 0; oh < geo.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) - p;
          for (std::size_t ow = 0; ow < geo.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) - p;
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(geo.height) &&
                                iw < static_cast<std::ptrdiff_t>(geo.width);
            row[oh * geo.out_w + ow] =
                inside ? image[(c * geo.height + static_cast<std::size_t>(ih)) * geo.width + static_cast<std::size_t>(iw)]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const double* cols, const Im2ColGeometry& geo, double* image) {
  const auto k = geo.g.kernel;
  const auto s = geo.g.stride;
  const auto p = static_cast<std::ptrdiff_t>(geo.g.padding);
  for (std::size_t c = 0; c < geo.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * geo.cols();
        for (std::size_t oh = 0; oh < geo.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) - p;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(geo.height)) continue;
          for (std::size_t ow = 0; ow < geo.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) - p;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(geo.width)) continue;
            image[(c * geo.height + static_cast<std::size_t>(ih)) * geo.width + static_cast<std::size_t>(iw)] +=
                row[oh * geo.out_w + ow];
          }
        }
      }
    }
  }
}

void check_conv_params(const Var& weight, const Var& bias, std::size_t out_channels, const ConvGeometry& g,
                       const char* op) {
  if (weight.shape().size() != 4 || weight.shape()[2] != g.kernel || weight.shape()[3] != g.kernel) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": weight shape " + shape_string(weight.shape()) +
                                              " inconsistent with kernel " + std::to_string(g.kernel));
  }
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": bias shape " + shape_string(bias.shape()) + ", expected (" +
                    std::to_string(out_channels) + ")");
  }
  if (g.kernel == 0 || g.stride == 0) throw Error(ErrorKind::Config, std::string(op) + ": kernel and stride must be >= 1");
}

}  // namespace

void backward(const Var& root, const Tensor& seed) {
  if (!root.has_recorded_forward()) {
    throw Error(ErrorKind::NoRecordedForward, "backward() called on a value with no recorded forward pass");
  }
  if (seed.shape() != root.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "seed gradient shape " + shape_string(seed.shape()) + " vs output " +
                                              shape_string(root.shape()));
  }
  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::vector<Node*> leaves;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && !visited.count(child)) {
        visited.insert(child);
        if (child->backward_fn) {
          stack.emplace_back(child, 0);
        } else if (child->requires_grad) {
          leaves.push_back(child);
        }
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->ensure_grad().fill(0.0);
  // Leaf gradients are computed into a zeroed slot and then added to what was
  // there, so repeated calls accumulate exactly (g + g == 2g).
  std::vector<Tensor> previous;
  previous.reserve(leaves.size());
  for (Node* n : leaves) {
    previous.push_back(n->ensure_grad());
    n->grad.fill(0.0);
  }
  auto& g = root.node()->ensure_grad();
  std::copy(seed.data().begin(), seed.data().end(), g.data().begin());
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward_fn(**it);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto dst = leaves[i]->grad.data();
    const auto src = previous[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void backward(const Var& root) {
  if (root.defined() && root.value().size() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "backward() without a seed requires a scalar output");
  }
  backward(root, Tensor::scalar(1.0));
}

Var detach(const Var& v) { return Var::leaf(v.value(), false); }

std::size_t conv_output_size(std::size_t in, const ConvGeometry& g) {
  const auto padded = in + 2 * g.padding;
  if (padded < g.kernel) {
    throw Error(ErrorKind::ShapeMismatch, "input extent " + std::to_string(in) + " smaller than kernel " +
                                              std::to_string(g.kernel) + " after padding");
  }
  return (padded - g.kernel) / g.stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, const ConvGeometry& g) {
  const auto full = (in - 1) * g.stride + g.kernel;
  if (in == 0 || full < 2 * g.padding + 1) {
    throw Error(ErrorKind::ShapeMismatch, "transposed convolution output would be empty");
  }
  return full - 2 * g.padding;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  require_rank4(x, "conv2d");
  const auto n = x.shape()[0];
  const auto cin = x.shape()[1];
  const auto h = x.shape()[2];
  const auto w = x.shape()[3];
  const auto cout = weight.shape().empty() ? 0 : weight.shape()[0];
  check_conv_params(weight, bias, cout, g, "conv2d");
  if (weight.shape()[1] != cin) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                                              std::to_string(weight.shape()[1]));
  }
  const Im2ColGeometry geo{cin, h, w, conv_output_size(h, g), conv_output_size(w, g), g};
  const GemmShape fwd{cout, geo.cols(), geo.rows()};

  Tensor out({n, cout, geo.out_h, geo.out_w});
  auto cols = std::make_shared<std::vector<double>>(n * geo.rows() * geo.cols());
  for (std::size_t b = 0; b < n; ++b) {
    double* col = cols->data() + b * geo.rows() * geo.cols();
    im2col(x.value().data().data() + b * cin * h * w, geo, col);
    std::span<double> out_b = out.data().subspan(b * cout * geo.cols(), cout * geo.cols());
    kernels::gemm(Transpose::No, Transpose::No, fwd, 1.0, weight.value().data(),
                  std::span<const double>(col, geo.rows() * geo.cols()), 0.0, out_b);
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) {
        for (std::size_t i = 0; i < geo.cols(); ++i) out_b[c * geo.cols() + i] += bias.value()[c];
      }
    }
  }
  const bool has_bias = bias.defined();
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      std::move(out), inputs,
      [geo, n, cin, cout, h, w, cols, has_bias](Node& self) {
        const auto& dy = self.grad;
        const auto& wt = self.inputs[1]->value;
        Tensor* dx = input_grad(self, 0);
        Tensor* dw = input_grad(self, 1);
        Tensor* db = has_bias ? input_grad(self, 2) : nullptr;
        std::vector<double> dcol(geo.rows() * geo.cols());
        for (std::size_t b = 0; b < n; ++b) {
          auto dy_b = dy.data().subspan(b * cout * geo.cols(), cout * geo.cols());
          std::span<const double> col(cols->data() + b * geo.rows() * geo.cols(), geo.rows() * geo.cols());
          if (dw) {
            kernels::gemm(Transpose::No, Transpose::Yes, {cout, geo.rows(), geo.cols()}, 1.0, dy_b, col, 1.0,
                          dw->data());
          }
          if (dx) {
            kernels::gemm(Transpose::Yes, Transpose::No, {geo.rows(), geo.cols(), cout}, 1.0, wt.data(), dy_b, 0.0,
                          dcol);
            col2im(dcol.data(), geo, dx->data().data() + b * cin * h * w);
          }
          if (db) {
            for (std::size_t c = 0; c < cout; ++c) {
              double s = 0.0;
              for (std::size_t i = 0; i < geo.cols(); ++i) s += dy_b[c * geo.cols() + i];
              (*db)[c] += s;
            }
          }
        }
      },
      "conv2d");
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  require_rank4(x, "conv_transpose2d");
  const auto n = x.shape()[0];
  const auto cin = x.shape()[1];
  const auto h = x.shape()[2];
  const auto w = x.shape()[3];
  const auto cout = weight.shape().size() == 4 ? weight.shape()[1] : 0;
  check_conv_params(weight, bias, cout, g, "conv_transpose2d");
  if (weight.shape()[0] != cin) {
    throw Error(ErrorKind::ShapeMismatch, "conv_transpose2d: input has " + std::to_string(cin) +
                                              " channels, weight expects " + std::to_string(weight.shape()[0]));
  }
  const auto oh = conv_transpose_output_size(h, g);
  const auto ow = conv_transpose_output_size(w, g);
  // The output image plays the role of the convolution input.
  const Im2ColGeometry geo{cout, oh, ow, h, w, g};
  if (conv_output_size(oh, g) != h || conv_output_size(ow, g) != w) {
    throw Error(ErrorKind::ShapeMismatch, "conv_transpose2d geometry is not invertible for this input");
  }
  Tensor out({n, cout, oh, ow});
  std::vector<double> col(geo.rows() * geo.cols());
  for (std::size_t b = 0; b < n; ++b) {
    auto x_b = x.value().data().subspan(b * cin * h * w, cin * h * w);
    kernels::gemm(Transpose::Yes, Transpose::No, {geo.rows(), geo.cols(), cin}, 1.0, weight.value().data(), x_b, 0.0,
                  col);
    double* out_b = out.data().data() + b * cout * oh * ow;
    col2im(col.data(), geo, out_b);
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) {
        for (std::size_t i = 0; i < oh * ow; ++i) out_b[c * oh * ow + i] += bias.value()[c];
      }
    }
  }
  const bool has_bias = bias.defined();
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      std::move(out), inputs,
      [geo, n, cin, cout, h, w, oh, ow, has_bias](Node& self) {
        const auto& dy = self.grad;
        const auto& xv = self.inputs[0]->value;
        const auto& wt = self.inputs[1]->value;
        Tensor* dx = input_grad(self, 0);
        Tensor* dw = input_grad(self, 1);
        Tensor* db = has_bias ? input_grad(self, 2) : nullptr;
        std::vector<double> dcol(geo.rows() * geo.cols());
        for (std::size_t b = 0; b < n; ++b) {
          const double* dy_b = dy.data().data() + b * cout * oh * ow;
          im2col(dy_b, geo, dcol.data());
          if (dx) {
            kernels::gemm(Transpose::No, Transpose::No, {cin, geo.cols(), geo.rows()}, 1.0, wt.data(), dcol, 1.0,
                          dx->data().subspan(b * cin * h * w, cin * h * w));
          }
          if (dw) {
            kernels::gemm(Transpose::No, Transpose::Yes, {cin, geo.rows(), geo.cols()}, 1.0,
                          xv.data().subspan(b * cin * h * w, cin * h * w), dcol, 1.0, dw->data());
          }
          if (db) {
            for (std::size_t c = 0; c < cout; ++c) {
              double s = 0.0;
              for (std::size_t i = 0; i < oh * ow; ++i) s += dy_b[c * oh * ow + i];
              (*db)[c] += s;
            }
          }
        }
      },
      "conv_transpose2d");
}

Var instance_norm(const Var& x, const Var& scale_p, const Var& shift_p, double eps) {
  require_rank4(x, "instance_norm");
  const auto n = x.shape()[0];
  const auto c = x.shape()[1];
  const auto hw = x.shape()[2] * x.shape()[3];
  if (scale_p.shape() != Shape{c} || shift_p.shape() != Shape{c}) {
    throw Error(ErrorKind::ShapeMismatch, "instance_norm: affine parameters must have shape (" + std::to_string(c) + ")");
  }
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.value().size());
  auto inv_std = std::make_shared<std::vector<double>>(n * c);
  const auto& xv = x.value();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      double mu = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mu += xv[base + i];
      mu /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
      var /= static_cast<double>(hw);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[b * c + ch] = is;
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = (xv[base + i] - mu) * is;
        (*xhat)[base + i] = v;
        out[base + i] = scale_p.value()[ch] * v + shift_p.value()[ch];
      }
    }
  }
  return make_result(
      std::move(out), {x, scale_p, shift_p},
      [n, c, hw, xhat, inv_std](Node& self) {
        const auto& dy = self.grad;
        const auto& gamma = self.inputs[1]->value;
        Tensor* dx = input_grad(self, 0);
        Tensor* dg = input_grad(self, 1);
        Tensor* dbeta = input_grad(self, 2);
        const double m = static_cast<double>(hw);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * hw;
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += dy[base + i] * (*xhat)[base + i];
            }
            if (dg) (*dg)[ch] += sum_dy_xhat;
            if (dbeta) (*dbeta)[ch] += sum_dy;
            if (dx) {
              const double k = gamma[ch] * (*inv_std)[b * c + ch] / m;
              for (std::size_t i = 0; i < hw; ++i) {
                (*dx)[base + i] += k * (m * dy[base + i] - sum_dy - (*xhat)[base + i] * sum_dy_xhat);
              }
            }
          }
        }
      },
      "instance_norm");
}

namespace {

// Elementwise op with derivative expressed from (input, output).
template <typename F, typename D>
Var unary(const Var& x, F f, D df, const char* op) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(
      std::move(out), {x},
      [df](Node& self) {
        Tensor* dx = input_grad(self, 0);
        if (!dx) return;
        const auto& xv = self.inputs[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*dx)[i] += self.grad[i] * df(xv[i], self.value[i]);
      },
      op);
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; }, "leaky_relu");
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; }, "relu");
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return stable_sigmoid(v); }, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var dropout(const Var& x, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::Config, "dropout probability must be in [0, 1)");
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] = x.value()[i] * (*mask)[i];
  }
  return make_result(
      std::move(out), {x},
      [mask](Node& self) {
        Tensor* dx = input_grad(self, 0);
        if (!dx) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*dx)[i] += self.grad[i] * (*mask)[i];
      },
      "dropout");
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank4(a, "concat");
  require_rank4(b, "concat");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw Error(ErrorKind::ShapeMismatch, "concat: " + shape_string(sa) + " and " + shape_string(sb) +
                                              " differ outside the channel axis");
  }
  const auto n = sa[0];
  const auto ca = sa[1] * sa[2] * sa[3];
  const auto cb = sb[1] * sb[2] * sb[3];
  Tensor out({n, sa[1] + sb[1], sa[2], sa[3]});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().data().begin() + static_cast<std::ptrdiff_t>(i * ca), ca,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * (ca + cb)));
    std::copy_n(b.value().data().begin() + static_cast<std::ptrdiff_t>(i * cb), cb,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * (ca + cb) + ca));
  }
  return make_result(
      std::move(out), {a, b},
      [n, ca, cb](Node& self) {
        Tensor* da = input_grad(self, 0);
        Tensor* db = input_grad(self, 1);
        for (std::size_t i = 0; i < n; ++i) {
          const double* g = self.grad.data().data() + i * (ca + cb);
          if (da) {
            for (std::size_t j = 0; j < ca; ++j) (*da)[i * ca + j] += g[j];
          }
          if (db) {
            for (std::size_t j = 0; j < cb; ++j) (*db)[i * cb + j] += g[ca + j];
          }
        }
      },
      "concat");
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
          if (Tensor* d = input_grad(self, k)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*d)[i] += self.grad[i];
          }
        }
      },
      "add");
}

Var scale(const Var& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return make_result(
      std::move(out), {a},
      [s](Node& self) {
        if (Tensor* d = input_grad(self, 0)) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) (*d)[i] += self.grad[i] * s;
        }
      },
      "scale");
}

Var mean(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const double count = static_cast<double>(x.value().size());
  return make_result(
      Tensor::scalar(s / count), {x},
      [count](Node& self) {
        if (Tensor* d = input_grad(self, 0)) {
          const double g = self.grad[0] / count;
          for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += g;
        }
      },
      "mean");
}

Var weighted_sum(const Var& x, const Tensor& w) {
  if (w.shape() != x.shape()) throw Error(ErrorKind::ShapeMismatch, "weighted_sum: weight shape differs from input");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  auto weights = std::make_shared<Tensor>(w);
  return make_result(
      Tensor::scalar(s), {x},
      [weights](Node& self) {
        if (Tensor* d = input_grad(self, 0)) {
          for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[0] * (*weights)[i];
        }
      },
      "weighted_sum");
}

Var l1_mean(const Var& a, const Var& b) {
  require_same_shape(a, b, "l1_mean");
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += std::abs(a.value()[i] - b.value()[i]);
  const double count = static_cast<double>(a.value().size());
  return make_result(
      Tensor::scalar(s / count), {a, b},
      [count](Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        Tensor* da = input_grad(self, 0);
        Tensor* db = input_grad(self, 1);
        const double g = self.grad[0] / count;
        for (std::size_t i = 0; i < av.size(); ++i) {
          const double diff = av[i] - bv[i];
          const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          if (da) (*da)[i] += g * sgn;
          if (db) (*db)[i] -= g * sgn;
        }
      },
      "l1_mean");
}

Var bce_with_logits_mean(const Var& logits, double target) {
  const auto& z = logits.value();
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    s += std::max(z[i], 0.0) - z[i] * target + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double count = static_cast<double>(z.size());
  return make_result(
      Tensor::scalar(s / count), {logits},
      [count, target](Node& self) {
        Tensor* d = input_grad(self, 0);
        if (!d) return;
        const auto& zv = self.inputs[0]->value;
        const double g = self.grad[0] / count;
        for (std::size_t i = 0; i < zv.size(); ++i) (*d)[i] += g * (stable_sigmoid(zv[i]) - target);
      },
      "bce_with_logits");
}

}  // namespace stst::nn
