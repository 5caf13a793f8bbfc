// SPDX-License-Identifier: Apache-2.0
#pragma once

// Grayscale -> H&E re-staining with a conditional GAN: U-Net generator,
// PatchGAN discriminator, adversarial + weighted L1 objective.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stst/image.hpp"
#include "stst/nn/layer.hpp"

namespace stst {

struct GeneratorConfig {
  int depth = 8;
  std::size_t base_filters = 64;
  std::size_t in_channels = 1;
  std::size_t out_channels = 3;
  /// Decoder levels (0 = outermost) that apply dropout.
  std::set<int> dropout_levels{7, 6, 5};
  bool skip_connections = true;

  /// depth levels with dropout on the innermost three decoder levels.
  static GeneratorConfig with_depth(int depth, std::size_t base_filters);
  static GeneratorConfig full_scale() { return with_depth(8, 64); }
  /// 32x32 inputs, 8 base filters, 5 levels.
  static GeneratorConfig desk() { return with_depth(5, 8); }

  std::size_t filters(int level) const;
  void validate() const;
  /// Throws ShapeMismatch unless both dims are divisible by 2^depth.
  void check_input(std::size_t height, std::size_t width) const;
};

struct DiscriminatorConfig {
  int num_layers = 3;
  std::size_t base_filters = 64;
  std::size_t in_channels = 4;

  static DiscriminatorConfig full_scale() { return {}; }
  static DiscriminatorConfig desk() { return {2, 8, 4}; }

  std::size_t filters(int level) const;
  void validate() const;
};

class Generator : public nn::Module {
 public:
  explicit Generator(GeneratorConfig cfg);

  const GeneratorConfig& config() const noexcept { return cfg_; }
  /// y: (1, in_channels, H, W) in [-1,1] -> (1, out_channels, H, W) in [-1,1].
  nn::Var forward(const nn::Var& y, const nn::ForwardContext& ctx) const;
  std::vector<nn::Parameter> parameters() const override;

 private:
  struct Level {
    nn::Layer conv;
    std::optional<nn::Layer> norm;
  };
  GeneratorConfig cfg_;
  std::vector<Level> encoder_;
  std::vector<Level> decoder_;  // index = level
};

class Discriminator : public nn::Module {
 public:
  explicit Discriminator(DiscriminatorConfig cfg);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  /// Pre-sigmoid patch scores.
  nn::Var forward_logits(const nn::Var& input, const nn::ForwardContext& ctx) const;
  /// n x n probability map in (0,1).
  nn::Var forward(const nn::Var& input, const nn::ForwardContext& ctx) const;
  std::vector<nn::Parameter> parameters() const override;

 private:
  struct Block {
    nn::Layer conv;
    std::optional<nn::Layer> norm;
    bool activation;
  };
  DiscriminatorConfig cfg_;
  std::vector<Block> blocks_;
};

/// Scalar decision: mean of the patch map.
double patch_decision(const nn::Tensor& map);

Generator build_generator(const GeneratorConfig& cfg, std::uint64_t seed);
Discriminator build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

// ---- training ------------------------------------------------------------

struct TrainConfig {
  double lambda_l1 = 100.0;
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 30;
  int batch_size = 1;
  bool halve_disc_loss = true;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0;  // steps; 0 = epoch ends only
  std::uint64_t max_steps = 0;         // stop early after this many steps; 0 = no limit

  void validate() const;
  nn::AdamConfig adam() const { return {lr, beta1, beta2, 1e-8}; }
};

struct LossRecord {
  std::uint64_t step = 0;
  double d_loss = 0.0;
  double g_gan_loss = 0.0;
  double g_l1_loss = 0.0;
  double g_total = 0.0;
};

/// Grayscale condition and RGB target, both (1, C, H, W) in [-1,1].
struct TrainingPair {
  nn::Tensor gray;
  nn::Tensor rgb;
};

TrainingPair make_training_pair(const PlanarImage& gray, const RgbImage& rgb);

struct GeneratorLosses {
  nn::Var gan;
  nn::Var l1;
  nn::Var total;
};

/// Adversarial + lambda * L1 terms for a given generator output `fake`.
GeneratorLosses generator_losses(const Discriminator& disc, const nn::Var& gray, const nn::Var& rgb,
                                 const nn::Var& fake, double lambda_l1);
/// BCE(D(y,x), 1) + BCE(D(y,fake), 0), halved when requested.
nn::Var discriminator_loss(const Discriminator& disc, const nn::Var& gray, const nn::Var& rgb, const nn::Var& fake,
                           bool halve);

struct OptimizerStates {
  nn::AdamState generator;
  nn::AdamState discriminator;
};

OptimizerStates make_optimizers(const TrainConfig& cfg);

/// One D update followed by one G update. Dropout draws from derive_seed(cfg.seed, step).
LossRecord train_step(const Generator& gen, const Discriminator& disc, const TrainingPair& pair, const TrainConfig& cfg,
                      OptimizerStates& opt, std::uint64_t step);

struct TrainResult {
  std::vector<LossRecord> log;
  std::vector<nn::Tensor> best_parameters;  // generator snapshot with the lowest trailing-epoch L1
  std::optional<int> best_epoch;
  std::vector<std::filesystem::path> checkpoints;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> directory;  // checkpoints + loss_log.csv when set
};

/// Runs epochs x |dataset| steps in per-epoch seeded shuffles.
TrainResult train(const Generator& gen, const Discriminator& disc, const std::vector<TrainingPair>& dataset,
                  const TrainConfig& cfg, const TrainOutputs& outputs = {});

/// Mean g_l1_loss over the last `window` records.
double trailing_mean_l1(const std::vector<LossRecord>& log, std::size_t window);

void write_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path);

// ---- inference -----------------------------------------------------------

struct RestainOptions {
  bool dropout = true;
  std::uint64_t seed = 0;
};

/// Grayscale -> generator -> RGB. Takes no reference image.
RgbImage restain(const Generator& gen, const RgbImage& source, const RestainOptions& options = {});

// ---- checkpoints ---------------------------------------------------------

void save_checkpoint(const Generator& gen, const std::filesystem::path& path);
void save_checkpoint(const Discriminator& disc, const std::filesystem::path& path);
/// Builds a generator from the configuration stored in the file.
Generator load_generator(const std::filesystem::path& path);
/// Loads stored tensors into an existing model; throws ShapeMismatch naming the offending tensor.
void load_checkpoint(const nn::Module& model, const std::filesystem::path& path);

}  // namespace stst
