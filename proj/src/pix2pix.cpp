// SPDX-License-Identifier: Apache-2.0
#include "stst/pix2pix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "stst/checkpoint.hpp"
#include "stst/error.hpp"
#include "stst/rng.hpp"

namespace stst {

using nn::ConvGeometry;
using nn::ForwardContext;
using nn::Layer;
using nn::LayerKind;
using nn::LayerSpec;
using nn::Tensor;
using nn::Var;

namespace {

constexpr ConvGeometry kDown{4, 2, 1};
constexpr ConvGeometry kFlat{4, 1, 1};

LayerSpec conv_spec(LayerKind kind, std::size_t in, std::size_t out, ConvGeometry g) {
  LayerSpec s;
  s.kind = kind;
  s.in_channels = in;
  s.out_channels = out;
  s.geometry = g;
  return s;
}

Layer norm_layer(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::Norm;
  s.in_channels = channels;
  return Layer(s);
}

std::size_t capped_filters(std::size_t base, int level) {
  const std::size_t cap = 8 * base;
  std::size_t f = base;
  for (int i = 0; i < level && f < cap; ++i) f *= 2;
  return std::min(f, cap);
}

}  // namespace

// ---- configs -------------------------------------------------------------

GeneratorConfig GeneratorConfig::with_depth(int depth, std::size_t base_filters) {
  GeneratorConfig c;
  c.depth = depth;
  c.base_filters = base_filters;
  c.dropout_levels.clear();
  for (int j = depth - 1; j >= std::max(1, depth - 3); --j) c.dropout_levels.insert(j);
  return c;
}

std::size_t GeneratorConfig::filters(int level) const { return capped_filters(base_filters, level); }

void GeneratorConfig::validate() const {
  if (depth < 2) throw Error(ErrorKind::Config, "generator depth must be >= 2, got " + std::to_string(depth));
  if (depth > 16) throw Error(ErrorKind::Config, "generator depth " + std::to_string(depth) + " is unreasonably large");
  if (base_filters < 1) throw Error(ErrorKind::Config, "generator base_filters must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw Error(ErrorKind::Config, "generator channel counts must be >= 1");
  for (int j : dropout_levels) {
    if (j < 1 || j >= depth) {
      throw Error(ErrorKind::Config, "dropout level " + std::to_string(j) + " outside decoder levels 1.." +
                                         std::to_string(depth - 1));
    }
  }
}

void GeneratorConfig::check_input(std::size_t height, std::size_t width) const {
  const std::size_t unit = std::size_t{1} << depth;
  if (height == 0 || width == 0 || height % unit != 0 || width % unit != 0) {
    throw Error(ErrorKind::ShapeMismatch, "input " + std::to_string(height) + "x" + std::to_string(width) +
                                              " must have both dims divisible by 2^" + std::to_string(depth) + " = " +
                                              std::to_string(unit));
  }
}

std::size_t DiscriminatorConfig::filters(int level) const { return capped_filters(base_filters, level); }

void DiscriminatorConfig::validate() const {
  if (num_layers < 1) throw Error(ErrorKind::Config, "discriminator num_layers must be >= 1");
  if (base_filters < 1) throw Error(ErrorKind::Config, "discriminator base_filters must be >= 1");
  if (in_channels < 1) throw Error(ErrorKind::Config, "discriminator in_channels must be >= 1");
}

// ---- generator -----------------------------------------------------------

Generator::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int d = cfg_.depth;
  std::size_t in = cfg_.in_channels;
  for (int i = 0; i < d; ++i) {
    const auto f = cfg_.filters(i);
    Level lvl{Layer(conv_spec(LayerKind::Conv, in, f, kDown)), std::nullopt};
    // The innermost level is 1x1 at the supported input sizes; normalising it would zero it.
    if (i != 0 && i != d - 1) lvl.norm = norm_layer(f);
    encoder_.push_back(std::move(lvl));
    in = f;
  }
  for (int j = 0; j < d; ++j) {
    const auto f = cfg_.filters(j);
    const std::size_t in_ch = (j == d - 1 || !cfg_.skip_connections) ? f : 2 * f;
    const std::size_t out_ch = j == 0 ? cfg_.out_channels : cfg_.filters(j - 1);
    Level lvl{Layer(conv_spec(LayerKind::ConvTranspose, in_ch, out_ch, kDown)), std::nullopt};
    if (j != 0) lvl.norm = norm_layer(out_ch);
    decoder_.push_back(std::move(lvl));
  }
}

Var Generator::forward(const Var& y, const ForwardContext& ctx) const {
  const auto& s = y.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != cfg_.in_channels) {
    throw Error(ErrorKind::ShapeMismatch, "generator expects (1, " + std::to_string(cfg_.in_channels) +
                                              ", H, W), got " + nn::shape_string(s));
  }
  cfg_.check_input(s[2], s[3]);

  std::vector<Var> skips;
  Var h = y;
  for (const auto& lvl : encoder_) {
    h = nn::leaky_relu(lvl.conv.forward(h, ctx), 0.2);
    if (lvl.norm) h = lvl.norm->forward(h, ctx);
    skips.push_back(h);
  }
  for (int j = cfg_.depth - 1; j >= 0; --j) {
    const auto& lvl = decoder_[static_cast<std::size_t>(j)];
    Var u = h;
    if (j != cfg_.depth - 1 && cfg_.skip_connections) u = nn::concat_channels(h, skips[static_cast<std::size_t>(j)]);
    h = lvl.conv.forward(u, ctx);
    if (j == 0) return nn::tanh(h);
    h = lvl.norm->forward(h, ctx);
    if (cfg_.dropout_levels.contains(j) && ctx.dropout_active()) {
      if (!ctx.rng) throw Error(ErrorKind::Config, "dropout requires a random generator in the forward context");
      h = nn::dropout(h, 0.5, *ctx.rng);
    }
    h = nn::relu(h);
  }
  return h;
}

std::vector<nn::Parameter> Generator::parameters() const {
  std::vector<nn::Parameter> out;
  auto append = [&](const std::vector<Level>& levels, const std::string& side) {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto prefix = side + "." + std::to_string(i);
      auto p = levels[i].conv.parameters(prefix + ".conv");
      out.insert(out.end(), p.begin(), p.end());
      if (levels[i].norm) {
        auto q = levels[i].norm->parameters(prefix + ".norm");
        out.insert(out.end(), q.begin(), q.end());
      }
    }
  };
  append(encoder_, "gen.enc");
  append(decoder_, "gen.dec");
  return out;
}

// ---- discriminator -------------------------------------------------------

Discriminator::Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = cfg_.in_channels;
  for (int i = 0; i < cfg_.num_layers; ++i) {
    const auto f = cfg_.filters(i);
    Block b{Layer(conv_spec(LayerKind::Conv, in, f, kDown)), std::nullopt, true};
    if (i != 0) b.norm = norm_layer(f);
    blocks_.push_back(std::move(b));
    in = f;
  }
  const auto f = cfg_.filters(cfg_.num_layers);
  blocks_.push_back(Block{Layer(conv_spec(LayerKind::Conv, in, f, kFlat)), norm_layer(f), true});
  blocks_.push_back(Block{Layer(conv_spec(LayerKind::Conv, f, 1, kFlat)), std::nullopt, false});
}

Var Discriminator::forward_logits(const Var& input, const ForwardContext& ctx) const {
  const auto& s = input.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != cfg_.in_channels) {
    throw Error(ErrorKind::ShapeMismatch, "discriminator expects (1, " + std::to_string(cfg_.in_channels) +
                                              ", H, W), got " + nn::shape_string(s));
  }
  Var h = input;
  for (const auto& b : blocks_) {
    h = b.conv.forward(h, ctx);
    if (b.norm) h = b.norm->forward(h, ctx);
    if (b.activation) h = nn::leaky_relu(h, 0.2);
  }
  return h;
}

Var Discriminator::forward(const Var& input, const ForwardContext& ctx) const {
  return nn::sigmoid(forward_logits(input, ctx));
}

std::vector<nn::Parameter> Discriminator::parameters() const {
  std::vector<nn::Parameter> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto prefix = "disc." + std::to_string(i);
    auto p = blocks_[i].conv.parameters(prefix + ".conv");
    out.insert(out.end(), p.begin(), p.end());
    if (blocks_[i].norm) {
      auto q = blocks_[i].norm->parameters(prefix + ".norm");
      out.insert(out.end(), q.begin(), q.end());
    }
  }
  return out;
}

double patch_decision(const Tensor& map) {
  if (map.size() == 0) throw Error(ErrorKind::ShapeMismatch, "empty patch map");
  const auto d = map.data();
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

Generator build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  Generator g(cfg);
  nn::init_weights(g, seed);
  return g;
}

Discriminator build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  Discriminator d(cfg);
  nn::init_weights(d, seed);
  return d;
}

// ---- training ------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lambda_l1 >= 0.0) || !std::isfinite(lambda_l1)) throw Error(ErrorKind::Config, "lambda_l1 must be finite and >= 0");
  if (!(lr > 0.0)) throw Error(ErrorKind::Config, "lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::Config, "beta1 and beta2 must lie in [0, 1)");
  }
  if (epochs < 0) throw Error(ErrorKind::Config, "epochs must be >= 0");
  if (batch_size != 1) throw Error(ErrorKind::Config, "batch_size must be 1, got " + std::to_string(batch_size));
}

TrainingPair make_training_pair(const PlanarImage& gray, const RgbImage& rgb) {
  if (gray.channels() != 1) throw Error(ErrorKind::ShapeMismatch, "condition image must have one channel");
  if (gray.width() != rgb.width() || gray.height() != rgb.height()) {
    throw Error(ErrorKind::DimensionMismatch, "gray and RGB images differ in size");
  }
  const auto h = rgb.height(), w = rgb.width();
  TrainingPair p{Tensor({1, 1, h, w}), Tensor({1, 3, h, w})};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      p.gray.at(0, 0, y, x) = std::clamp(gray.at(0, x, y) / 127.5 - 1.0, -1.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) p.rgb.at(0, c, y, x) = rgb.at(x, y, c) / 127.5 - 1.0;
    }
  }
  return p;
}

GeneratorLosses generator_losses(const Discriminator& disc, const Var& gray, const Var& rgb, const Var& fake,
                                 double lambda_l1) {
  const ForwardContext ctx{nn::Mode::Train, nullptr, false};
  GeneratorLosses l;
  l.gan = nn::bce_with_logits_mean(disc.forward_logits(nn::concat_channels(gray, fake), ctx), 1.0);
  l.l1 = nn::l1_mean(rgb, fake);
  l.total = nn::add(l.gan, nn::scale(l.l1, lambda_l1));
  return l;
}

Var discriminator_loss(const Discriminator& disc, const Var& gray, const Var& rgb, const Var& fake, bool halve) {
  const ForwardContext ctx{nn::Mode::Train, nullptr, false};
  Var real = nn::bce_with_logits_mean(disc.forward_logits(nn::concat_channels(gray, rgb), ctx), 1.0);
  Var gen = nn::bce_with_logits_mean(disc.forward_logits(nn::concat_channels(gray, nn::detach(fake)), ctx), 0.0);
  Var total = nn::add(real, gen);
  return halve ? nn::scale(total, 0.5) : total;
}

OptimizerStates make_optimizers(const TrainConfig& cfg) {
  OptimizerStates s;
  s.generator.config = cfg.adam();
  s.discriminator.config = cfg.adam();
  return s;
}

LossRecord train_step(const Generator& gen, const Discriminator& disc, const TrainingPair& pair, const TrainConfig& cfg,
                      OptimizerStates& opt, std::uint64_t step) {
  Rng rng(derive_seed(cfg.seed, step));
  const ForwardContext ctx{nn::Mode::Train, &rng, false};
  const Var gray = Var::leaf(pair.gray);
  const Var rgb = Var::leaf(pair.rgb);

  LossRecord rec;
  rec.step = step;
  try {
    const Var fake = gen.forward(gray, ctx);

    const Var d_loss = discriminator_loss(disc, gray, rgb, fake, cfg.halve_disc_loss);
    disc.zero_grad();
    nn::backward(d_loss);
    const auto d_params = disc.parameters();
    nn::adam_step(d_params, opt.discriminator);

    const auto g = generator_losses(disc, gray, rgb, fake, cfg.lambda_l1);
    gen.zero_grad();
    nn::backward(g.total);
    const auto g_params = gen.parameters();
    nn::adam_step(g_params, opt.generator);

    rec.d_loss = d_loss.item();
    rec.g_gan_loss = g.gan.item();
    rec.g_l1_loss = g.l1.item();
    rec.g_total = g.total.item();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NaNLoss) {
      throw Error(ErrorKind::NaNLoss, "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    throw;
  }
  for (double v : {rec.d_loss, rec.g_gan_loss, rec.g_l1_loss, rec.g_total}) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NaNLoss, "non-finite loss at step " + std::to_string(step));
  }
  return rec;
}

namespace {

std::vector<Tensor> snapshot(const nn::Module& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.var.value());
  return out;
}

std::string step_name(std::uint64_t step) {
  std::ostringstream s;
  s << "generator_step_" << std::setw(6) << std::setfill('0') << step << ".ckpt";
  return s.str();
}

}  // namespace

TrainResult train(const Generator& gen, const Discriminator& disc, const std::vector<TrainingPair>& dataset,
                  const TrainConfig& cfg, const TrainOutputs& outputs) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorKind::Config, "training needs at least one pair");
  if (outputs.directory) std::filesystem::create_directories(*outputs.directory);

  TrainResult result;
  result.best_parameters = snapshot(gen);
  auto opt = make_optimizers(cfg);
  std::vector<std::size_t> order(dataset.size());
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t step = 0;

  auto checkpoint = [&](std::uint64_t at) {
    if (!outputs.directory) return;
    const auto path = *outputs.directory / step_name(at);
    if (!result.checkpoints.empty() && result.checkpoints.back() == path) return;
    save_checkpoint(gen, path);
    result.checkpoints.push_back(path);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(cfg.seed ^ 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order);
    for (auto idx : order) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      result.log.push_back(train_step(gen, disc, dataset[idx], cfg, opt, step));
      ++step;
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) checkpoint(step);
    }
    checkpoint(step);
    const double trailing = trailing_mean_l1(result.log, dataset.size());
    if (trailing < best) {
      best = trailing;
      result.best_parameters = snapshot(gen);
      result.best_epoch = epoch;
    }
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
  }

  if (outputs.directory) {
    write_loss_log(result.log, *outputs.directory / "loss_log.csv");
    // The best snapshot is written through a scratch generator so the live model stays untouched.
    Generator best_gen(gen.config());
    auto params = best_gen.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].var.mutable_value() = result.best_parameters[i];
    save_checkpoint(best_gen, *outputs.directory / "generator_best.ckpt");
    save_checkpoint(disc, *outputs.directory / "discriminator_last.ckpt");
  }
  return result;
}

double trailing_mean_l1(const std::vector<LossRecord>& log, std::size_t window) {
  if (log.empty() || window == 0) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(window, log.size());
  double s = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) s += log[i].g_l1_loss;
  return s / static_cast<double>(n);
}

void write_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  f << "step,d_loss,g_gan_loss,g_l1_loss,g_total\n";
  f << std::setprecision(17);
  for (const auto& r : log) {
    f << r.step << ',' << r.d_loss << ',' << r.g_gan_loss << ',' << r.g_l1_loss << ',' << r.g_total << '\n';
  }
  if (!f) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

// ---- inference -----------------------------------------------------------

RgbImage restain(const Generator& gen, const RgbImage& source, const RestainOptions& options) {
  const auto& cfg = gen.config();
  if (cfg.in_channels != 1 || cfg.out_channels != 3) {
    throw Error(ErrorKind::Config, "restain needs a 1-channel -> 3-channel generator");
  }
  cfg.check_input(source.height(), source.width());
  const auto gray = to_grayscale(source);
  const auto h = source.height(), w = source.width();
  Tensor in({1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) in.at(0, 0, y, x) = std::clamp(gray.at(0, x, y) / 127.5 - 1.0, -1.0, 1.0);
  }

  nn::NoGradGuard guard;
  Rng rng(options.seed);
  const ForwardContext ctx{nn::Mode::Eval, &rng, options.dropout};
  const Var out = gen.forward(Var::leaf(std::move(in)), ctx);

  RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = round_to_u8((out.value().at(0, c, y, x) + 1.0) * 127.5);
    }
  }
  return img;
}

// ---- checkpoints ---------------------------------------------------------

namespace {

constexpr const char* kGenConfigName = "config.generator";
constexpr const char* kDiscConfigName = "config.discriminator";

Tensor encode_config(const GeneratorConfig& c) {
  std::vector<double> v{static_cast<double>(c.depth), static_cast<double>(c.base_filters),
                        static_cast<double>(c.in_channels), static_cast<double>(c.out_channels),
                        c.skip_connections ? 1.0 : 0.0, static_cast<double>(c.dropout_levels.size())};
  for (int j : c.dropout_levels) v.push_back(j);
  const auto n = v.size();
  return Tensor({n}, std::move(v));
}

GeneratorConfig decode_generator_config(const Tensor& t) {
  const auto d = t.data();
  auto as_int = [](double x) {
    if (!(x >= 0.0 && x <= 1e6) || x != std::floor(x)) throw Error(ErrorKind::Format, "corrupt generator config value");
    return static_cast<std::size_t>(x);
  };
  if (d.size() < 6) throw Error(ErrorKind::Format, "generator config tensor too short");
  GeneratorConfig c;
  c.depth = static_cast<int>(as_int(d[0]));
  c.base_filters = as_int(d[1]);
  c.in_channels = as_int(d[2]);
  c.out_channels = as_int(d[3]);
  c.skip_connections = d[4] != 0.0;
  const auto n = as_int(d[5]);
  if (d.size() != 6 + n) throw Error(ErrorKind::Format, "generator config tensor has inconsistent length");
  c.dropout_levels.clear();
  for (std::size_t i = 0; i < n; ++i) c.dropout_levels.insert(static_cast<int>(as_int(d[6 + i])));
  return c;
}

Tensor encode_config(const DiscriminatorConfig& c) {
  return Tensor({3}, std::vector<double>{static_cast<double>(c.num_layers), static_cast<double>(c.base_filters),
                                         static_cast<double>(c.in_channels)});
}

void save_with_config(const nn::Module& m, NamedTensor config, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors{std::move(config)};
  for (const auto& p : m.parameters()) tensors.push_back({p.name, p.var.value()});
  write_tensor_file(path, tensors);
}

void assign(const nn::Module& model, const std::vector<NamedTensor>& stored) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : stored) by_name[t.name] = &t.tensor;
  auto params = model.parameters();
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw Error(ErrorKind::ShapeMismatch, "checkpoint is missing tensor '" + p.name + "'");
    if (it->second->shape() != p.var.shape()) {
      throw Error(ErrorKind::ShapeMismatch, "tensor '" + p.name + "' stored as " + nn::shape_string(it->second->shape()) +
                                                " but model expects " + nn::shape_string(p.var.shape()));
    }
  }
  for (auto& p : params) p.var.mutable_value() = *by_name.at(p.name);
}

}  // namespace

void save_checkpoint(const Generator& gen, const std::filesystem::path& path) {
  save_with_config(gen, {kGenConfigName, encode_config(gen.config())}, path);
}

void save_checkpoint(const Discriminator& disc, const std::filesystem::path& path) {
  save_with_config(disc, {kDiscConfigName, encode_config(disc.config())}, path);
}

Generator load_generator(const std::filesystem::path& path) {
  const auto stored = read_tensor_file(path);
  auto it = std::find_if(stored.begin(), stored.end(), [](const NamedTensor& t) { return t.name == kGenConfigName; });
  if (it == stored.end()) throw Error(ErrorKind::Format, "'" + path.string() + "' holds no generator configuration");
  Generator gen(decode_generator_config(it->tensor));
  assign(gen, stored);
  return gen;
}

void load_checkpoint(const nn::Module& model, const std::filesystem::path& path) { assign(model, read_tensor_file(path)); }

}  // namespace stst
