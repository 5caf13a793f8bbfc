// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "oracles.hpp"
#include "stst/checkpoint.hpp"
#include "stst/error.hpp"
#include "stst/pix2pix.hpp"
#include "support.hpp"

using namespace stst;
using namespace stst::nn;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void randomize(const Module& m, Rng& rng, double spread) {
  for (auto& p : m.parameters()) {
    for (double& v : p.var.mutable_value().data()) v = rng.uniform(-spread, spread);
  }
}

std::vector<Var> vars_of(const Module& m) {
  std::vector<Var> out;
  for (auto& p : m.parameters()) out.push_back(p.var);
  return out;
}

std::vector<Tensor> values_of(const Module& m) {
  std::vector<Tensor> out;
  for (auto& p : m.parameters()) out.push_back(p.var.value());
  return out;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TrainingPair tissue_pair(std::uint64_t seed, std::size_t side = 32) {
  const auto rgb = testing::synthetic_tissue(seed, side, side);
  return make_training_pair(to_grayscale(rgb), rgb);
}

std::size_t conv_params(std::size_t in, std::size_t out) { return in * out * 16 + out; }

}  // namespace

TEST_CASE("generator preserves spatial size and emits three channels in [-1, 1]") {
  Rng rng(80);
  SUBCASE("default depth at 256x256 with narrow filters") {
    auto cfg = GeneratorConfig::with_depth(8, 2);
    const auto gen = build_generator(cfg, 1);
    const ForwardContext ctx{Mode::Eval, &rng, true};
    NoGradGuard guard;
    const auto out = gen.forward(Var::leaf(random_tensor(rng, {1, 1, 256, 256})), ctx);
    CHECK(out.shape() == Shape{1, 3, 256, 256});
    for (double v : out.value().data()) CHECK((v > -1.0 && v < 1.0));
  }
  SUBCASE("desk configuration at 32x32") {
    const auto gen = build_generator(GeneratorConfig::desk(), 1);
    const ForwardContext ctx{Mode::Train, &rng, false};
    const auto out = gen.forward(Var::leaf(random_tensor(rng, {1, 1, 32, 32})), ctx);
    CHECK(out.shape() == Shape{1, 3, 32, 32});
    for (double v : out.value().data()) CHECK((v > -1.0 && v < 1.0));
  }
  SUBCASE("sizes not divisible by 2^depth are rejected") {
    const auto gen = build_generator(GeneratorConfig::desk(), 1);
    const ForwardContext ctx{Mode::Eval, &rng, false};
    try {
      gen.forward(Var::leaf(Tensor({1, 1, 48, 40})), ctx);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
    CHECK_THROWS_AS(gen.forward(Var::leaf(Tensor({1, 3, 32, 32})), ctx), Error);
  }
}

TEST_CASE("generator configuration rules") {
  const auto full = GeneratorConfig::full_scale();
  CHECK(full.depth == 8);
  CHECK(full.base_filters == 64);
  CHECK(full.dropout_levels == std::set<int>{5, 6, 7});
  std::vector<std::size_t> f;
  for (int i = 0; i < 8; ++i) f.push_back(full.filters(i));
  CHECK(f == std::vector<std::size_t>{64, 128, 256, 512, 512, 512, 512, 512});
  CHECK(GeneratorConfig::desk().depth == 5);
  CHECK(GeneratorConfig::desk().dropout_levels == std::set<int>{2, 3, 4});

  auto bad = GeneratorConfig::desk();
  bad.depth = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = GeneratorConfig::desk();
  bad.dropout_levels.insert(0);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("removing skip connections only narrows the decoder inputs") {
  auto with = GeneratorConfig::desk();
  auto without = with;
  without.skip_connections = false;
  const Generator a(with), b(without);
  // Each decoder level below the innermost reads filters(j) extra channels from its skip.
  std::size_t expected = 0;
  for (int j = 0; j < with.depth - 1; ++j) {
    const std::size_t out = j == 0 ? with.out_channels : with.filters(j - 1);
    expected += with.filters(j) * out * 16;
  }
  CHECK(a.parameter_count() - b.parameter_count() == expected);

  Rng rng(81);
  const ForwardContext ctx{Mode::Eval, &rng, false};
  NoGradGuard guard;
  CHECK(b.forward(Var::leaf(random_tensor(rng, {1, 1, 32, 32})), ctx).shape() == Shape{1, 3, 32, 32});
}

TEST_CASE("generator parameter count matches the layer arithmetic") {
  const auto cfg = GeneratorConfig::with_depth(4, 3);
  const Generator gen(cfg);
  std::size_t n = 0, in = 1;
  for (int i = 0; i < 4; ++i) {
    n += conv_params(in, cfg.filters(i));
    if (i != 0 && i != 3) n += 2 * cfg.filters(i);
    in = cfg.filters(i);
  }
  for (int j = 0; j < 4; ++j) {
    const std::size_t cin = j == 3 ? cfg.filters(j) : 2 * cfg.filters(j);
    const std::size_t out = j == 0 ? 3 : cfg.filters(j - 1);
    n += conv_params(cin, out);
    if (j != 0) n += 2 * out;
  }
  CHECK(gen.parameter_count() == n);
}

TEST_CASE("discriminator patch map size and range") {
  Rng rng(82);
  NoGradGuard guard;
  SUBCASE("three strided layers on 256x256 give a 30x30 map") {
    DiscriminatorConfig cfg;
    cfg.base_filters = 4;
    const auto disc = build_discriminator(cfg, 2);
    const ForwardContext ctx{Mode::Eval, nullptr, false};
    const auto out = disc.forward(Var::leaf(random_tensor(rng, {1, 4, 256, 256})), ctx);
    CHECK(out.shape() == Shape{1, 1, 30, 30});
    for (double v : out.value().data()) CHECK((v > 0.0 && v < 1.0));
  }
  SUBCASE("desk discriminator on 32x32") {
    const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
    const ForwardContext ctx{Mode::Eval, nullptr, false};
    const auto out = disc.forward(Var::leaf(random_tensor(rng, {1, 4, 32, 32})), ctx);
    CHECK(out.shape() == Shape{1, 1, 6, 6});
    for (double v : out.value().data()) CHECK((v > 0.0 && v < 1.0));
    CHECK_THROWS_AS(disc.forward(Var::leaf(Tensor({1, 3, 32, 32})), ctx), Error);
  }
}

TEST_CASE("patch decision is the mean of the map") {
  CHECK(patch_decision(Tensor({1, 1, 30, 30}, 0.5)) == 0.5);
  Tensor t({1, 1, 2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.6});
  CHECK(patch_decision(t) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(patch_decision(Tensor()), Error);
}

TEST_CASE("training pairs are scaled to [-1, 1]") {
  const auto rgb = testing::uniform_rgb(4, 4, 0, 255, 51);
  const auto p = make_training_pair(to_grayscale(rgb), rgb);
  CHECK(p.rgb.shape() == Shape{1, 3, 4, 4});
  CHECK(p.gray.shape() == Shape{1, 1, 4, 4});
  CHECK(p.rgb.at(0, 0, 2, 1) == -1.0);
  CHECK(p.rgb.at(0, 1, 2, 1) == 1.0);
  CHECK(p.rgb.at(0, 2, 2, 1) == doctest::Approx(51 / 127.5 - 1.0));
  CHECK_THROWS_AS(make_training_pair(to_grayscale(rgb), testing::uniform_rgb(4, 5, 0, 0, 0)), Error);
}

TEST_CASE("loss terms at initialisation and in limiting cases") {
  const auto pair = tissue_pair(3);
  const auto gen = build_generator(GeneratorConfig::desk(), 1);
  const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
  Rng rng(4);
  const ForwardContext ctx{Mode::Train, &rng, false};
  const Var gray = Var::leaf(pair.gray), rgb = Var::leaf(pair.rgb);
  const Var fake = gen.forward(gray, ctx);

  // Small initial weights put every logit near zero, so each BCE term is near ln 2.
  const double halved = discriminator_loss(disc, gray, rgb, fake, true).item();
  const double full = discriminator_loss(disc, gray, rgb, fake, false).item();
  CHECK(halved == doctest::Approx(std::log(2.0)).epsilon(0.05));
  CHECK(full == 2.0 * halved);

  const auto zero = generator_losses(disc, gray, rgb, fake, 0.0);
  CHECK(zero.total.item() == zero.gan.item());

  const auto perfect = generator_losses(disc, gray, rgb, rgb, 100.0);
  CHECK(perfect.l1.item() == 0.0);
  CHECK(perfect.total.item() == perfect.gan.item());

  const auto weighted = generator_losses(disc, gray, rgb, fake, 100.0);
  double l1 = 0.0;
  for (std::size_t i = 0; i < pair.rgb.size(); ++i) l1 += std::abs(pair.rgb[i] - fake.value()[i]);
  l1 /= static_cast<double>(pair.rgb.size());
  CHECK(weighted.l1.item() == doctest::Approx(l1).epsilon(1e-12));
  CHECK(std::abs(weighted.total.item() - (weighted.gan.item() + 100.0 * weighted.l1.item())) < 1e-9);
}

TEST_CASE("halving the discriminator loss halves its gradients exactly") {
  const auto pair = tissue_pair(5);
  const auto gen = build_generator(GeneratorConfig::desk(), 1);
  const auto d1 = build_discriminator(DiscriminatorConfig::desk(), 2);
  const auto d2 = build_discriminator(DiscriminatorConfig::desk(), 2);
  Rng rng(6);
  const ForwardContext ctx{Mode::Train, &rng, false};
  const Var gray = Var::leaf(pair.gray), rgb = Var::leaf(pair.rgb);
  const Var fake = gen.forward(gray, ctx);

  d1.zero_grad();
  d2.zero_grad();
  backward(discriminator_loss(d1, gray, rgb, fake, true));
  backward(discriminator_loss(d2, gray, rgb, fake, false));
  const auto p1 = d1.parameters(), p2 = d2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const auto& g1 = p1[i].var.grad();
    const auto& g2 = p2[i].var.grad();
    for (std::size_t k = 0; k < g1.size(); ++k) CHECK(2.0 * g1[k] == g2[k]);
  }

  // Adam normalises the gradient scale away: the first step is lr*g/(|g|+eps) for g and for 2g.
  const auto before = values_of(d1);
  AdamState s1, s2;
  s1.config = s2.config = TrainConfig{}.adam();
  adam_step(p1, s1);
  adam_step(p2, s2);
  const double lr = s1.config.lr, eps = s1.config.epsilon;
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    for (std::size_t k = 0; k < before[i].size(); ++k) {
      const double g = p1[i].var.grad()[k];
      const double a = before[i][k] - p1[i].var.value()[k];
      const double b = before[i][k] - p2[i].var.value()[k];
      CHECK(a == doctest::Approx(lr * g / (std::abs(g) + eps)).epsilon(1e-9));
      CHECK(b == doctest::Approx(lr * 2 * g / (2 * std::abs(g) + eps)).epsilon(1e-9));
      CHECK(std::abs(a - b) <= lr * eps / (2 * std::abs(g)) * (1 + 1e-6) + 1e-16);
      // Above |g| = 5e-3 the epsilon effect is below 1e-6 relative.
      if (std::abs(g) >= 5e-3) {
        worst = std::max(worst, std::abs(a - b) / std::abs(a));
        ++compared;
      }
    }
  }
  CHECK(compared > 100);
  CHECK(worst < 1e-6);
}

TEST_CASE("gradients of the full objective match finite differences") {
  Rng rng(83);
  struct Setup {
    int depth;
    std::size_t side;
    int disc_layers;
  };
  for (const auto& s : {Setup{3, 8, 1}, Setup{4, 16, 2}}) {
    CAPTURE(s.side);
    const Generator gen(GeneratorConfig::with_depth(s.depth, 2));
    const Discriminator disc(DiscriminatorConfig{s.disc_layers, 2, 4});
    randomize(gen, rng, 0.5);
    randomize(disc, rng, 0.5);
    for (auto& p : gen.parameters()) {
      if (p.role == ParamRole::NormScale) {
        for (double& v : p.var.mutable_value().data()) v += 1.0;
      }
    }
    for (auto& p : disc.parameters()) {
      if (p.role == ParamRole::NormScale) {
        for (double& v : p.var.mutable_value().data()) v += 1.0;
      }
    }
    const Var gray = Var::leaf(random_tensor(rng, {1, 1, s.side, s.side}));
    const Var rgb = Var::leaf(random_tensor(rng, {1, 3, s.side, s.side}, -0.9, 0.9));
    auto fake_of = [&]() {
      Rng drop(99);  // same dropout masks on every evaluation
      return gen.forward(gray, ForwardContext{Mode::Train, &drop, false});
    };

    std::vector<Var> all = vars_of(gen);
    for (auto& v : vars_of(disc)) all.push_back(v);
    const auto g = oracle::gradient_check([&] { return generator_losses(disc, gray, rgb, fake_of(), 100.0).total; }, all);
    CHECK(g.checked == gen.parameter_count() + disc.parameter_count());
    CHECK(g.max_rel < 1e-4);

    const auto d = oracle::gradient_check([&] { return discriminator_loss(disc, gray, rgb, fake_of(), true); },
                                          vars_of(disc));
    CHECK(d.max_rel < 1e-4);
  }
}

TEST_CASE("train step logs the weighted objective and updates both networks") {
  const auto gen = build_generator(GeneratorConfig::desk(), 1);
  const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
  TrainConfig cfg;
  cfg.seed = 11;
  auto opt = make_optimizers(cfg);
  const auto pair = tissue_pair(1);
  const auto g0 = values_of(gen), d0 = values_of(disc);
  for (std::uint64_t step = 0; step < 5; ++step) {
    const auto rec = train_step(gen, disc, pair, cfg, opt, step);
    CHECK(rec.step == step);
    CHECK(std::abs(rec.g_total - (rec.g_gan_loss + cfg.lambda_l1 * rec.g_l1_loss)) < 1e-9);
    CHECK(rec.d_loss > 0.0);
  }
  CHECK(values_of(gen) != g0);
  CHECK(values_of(disc) != d0);
  CHECK(opt.generator.step == 5);
  CHECK(opt.discriminator.step == 5);
}

TEST_CASE("training is reproducible and honours its configuration") {
  const std::vector<TrainingPair> data{tissue_pair(1), tissue_pair(2)};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;

  SUBCASE("same seed, same log and weights") {
    const auto ga = build_generator(GeneratorConfig::desk(), 1), gb = build_generator(GeneratorConfig::desk(), 1);
    const auto da = build_discriminator(DiscriminatorConfig::desk(), 2);
    const auto db = build_discriminator(DiscriminatorConfig::desk(), 2);
    const auto ra = train(ga, da, data, cfg);
    const auto rb = train(gb, db, data, cfg);
    REQUIRE(ra.log.size() == 4);
    REQUIRE(rb.log.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(ra.log[i].g_total == rb.log[i].g_total);
      CHECK(ra.log[i].d_loss == rb.log[i].d_loss);
    }
    CHECK(values_of(ga) == values_of(gb));
    CHECK(ra.best_parameters == rb.best_parameters);
  }
  SUBCASE("zero epochs leave the model untouched") {
    const auto gen = build_generator(GeneratorConfig::desk(), 1);
    const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
    const auto before = values_of(gen);
    cfg.epochs = 0;
    const auto r = train(gen, disc, data, cfg);
    CHECK(r.log.empty());
    CHECK(!r.best_epoch);
    CHECK(values_of(gen) == before);
    CHECK(r.best_parameters == before);
  }
  SUBCASE("max_steps stops early") {
    const auto gen = build_generator(GeneratorConfig::desk(), 1);
    const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
    cfg.epochs = 10;
    cfg.max_steps = 3;
    CHECK(train(gen, disc, data, cfg).log.size() == 3);
  }
  SUBCASE("outputs are written to the directory") {
    const auto dir = testing::scratch_dir("train_outputs");
    const auto gen = build_generator(GeneratorConfig::desk(), 1);
    const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
    cfg.checkpoint_every = 1;
    const auto r = train(gen, disc, data, cfg, TrainOutputs{dir});
    CHECK(r.checkpoints.size() == 4);
    CHECK(std::filesystem::exists(dir / "generator_step_000004.ckpt"));
    CHECK(std::filesystem::exists(dir / "generator_best.ckpt"));
    CHECK(std::filesystem::exists(dir / "discriminator_last.ckpt"));
    std::ifstream log(dir / "loss_log.csv");
    std::string line;
    std::getline(log, line);
    CHECK(line == "step,d_loss,g_gan_loss,g_l1_loss,g_total");
    int rows = 0;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 4);
    const auto best = load_generator(dir / "generator_best.ckpt");
    CHECK(values_of(best) == r.best_parameters);
  }
  SUBCASE("invalid settings are rejected") {
    const auto gen = build_generator(GeneratorConfig::desk(), 1);
    const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
    auto bad = cfg;
    bad.batch_size = 2;
    CHECK_THROWS_AS(train(gen, disc, data, bad), Error);
    bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(train(gen, disc, data, bad), Error);
    CHECK_THROWS_AS(train(gen, disc, {}, cfg), Error);
  }
}

TEST_CASE("a poisoned weight surfaces as NaNLoss") {
  const auto gen = build_generator(GeneratorConfig::desk(), 1);
  const auto disc = build_discriminator(DiscriminatorConfig::desk(), 2);
  gen.parameters()[0].var.mutable_value()[0] = std::nan("");
  TrainConfig cfg;
  auto opt = make_optimizers(cfg);
  try {
    train_step(gen, disc, tissue_pair(1), cfg, opt, 0);
    FAIL("expected NaNLoss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NaNLoss);
  }
}

TEST_CASE("trailing mean L1") {
  std::vector<LossRecord> log(5);
  for (std::size_t i = 0; i < 5; ++i) log[i].g_l1_loss = static_cast<double>(i + 1);
  CHECK(trailing_mean_l1(log, 2) == 4.5);
  CHECK(trailing_mean_l1(log, 50) == 3.0);
  CHECK(std::isnan(trailing_mean_l1({}, 3)));
}

TEST_CASE("restain keeps the size and is deterministic for a fixed seed") {
  const auto gen = build_generator(GeneratorConfig::desk(), 1);
  const auto src = testing::synthetic_tissue(9, 64, 32);
  const auto a = restain(gen, src, {true, 5});
  const auto b = restain(gen, src, {true, 5});
  CHECK(a.width() == 64);
  CHECK(a.height() == 32);
  CHECK(a == b);
  CHECK(restain(gen, src, {false, 1}) == restain(gen, src, {false, 2}));
  CHECK(restain(gen, src, {true, 6}) != a);
  // Only the luminance of the source matters.
  const auto gray = to_grayscale(src);
  RgbImage flat(64, 32);
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      for (std::size_t c = 0; c < 3; ++c) flat.at(x, y, c) = round_to_u8(gray.at(0, x, y));
    }
  }
  if (to_grayscale(flat) == gray) CHECK(restain(gen, flat, {true, 5}) == a);
  try {
    restain(gen, testing::synthetic_tissue(9, 40, 32));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("checkpoints round-trip byte for byte") {
  const auto dir = testing::scratch_dir("ckpt");
  auto cfg = GeneratorConfig::desk();
  cfg.skip_connections = false;
  cfg.dropout_levels = {1, 4};
  const auto gen = build_generator(cfg, 17);
  save_checkpoint(gen, dir / "a.ckpt");
  const auto loaded = load_generator(dir / "a.ckpt");
  CHECK(loaded.config().skip_connections == false);
  CHECK(loaded.config().dropout_levels == std::set<int>{1, 4});
  CHECK(values_of(loaded) == values_of(gen));
  save_checkpoint(loaded, dir / "b.ckpt");
  CHECK(file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt"));

  const auto disc = build_discriminator(DiscriminatorConfig::desk(), 3);
  save_checkpoint(disc, dir / "d.ckpt");
  const Discriminator fresh(DiscriminatorConfig::desk());
  load_checkpoint(fresh, dir / "d.ckpt");
  CHECK(values_of(fresh) == values_of(disc));

  const auto src = testing::synthetic_tissue(2);
  const auto original = build_generator(GeneratorConfig::desk(), 4);
  save_checkpoint(original, dir / "g.ckpt");
  CHECK(restain(load_generator(dir / "g.ckpt"), src, {true, 3}) == restain(original, src, {true, 3}));
}

TEST_CASE("damaged or mismatched checkpoints are rejected") {
  const auto dir = testing::scratch_dir("ckpt_bad");
  const auto gen = build_generator(GeneratorConfig::desk(), 1);
  save_checkpoint(gen, dir / "g.ckpt");
  auto bytes = file_bytes(dir / "g.ckpt");

  auto expect_kind = [](auto&& fn, ErrorKind kind, const std::string& needle = "") {
    try {
      fn();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == kind);
      if (!needle.empty()) CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  {
    std::ofstream f(dir / "cut.ckpt", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  expect_kind([&] { load_generator(dir / "cut.ckpt"); }, ErrorKind::Format);

  auto magic = bytes;
  magic[0] = 'X';
  {
    std::ofstream f(dir / "magic.ckpt", std::ios::binary);
    f.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  }
  expect_kind([&] { load_generator(dir / "magic.ckpt"); }, ErrorKind::Format);

  const Generator wider(GeneratorConfig::with_depth(5, 4));
  expect_kind([&] { load_checkpoint(wider, dir / "g.ckpt"); }, ErrorKind::ShapeMismatch, "gen.enc.0.conv.weight");

  const Discriminator disc(DiscriminatorConfig::desk());
  expect_kind([&] { load_checkpoint(disc, dir / "g.ckpt"); }, ErrorKind::ShapeMismatch, "disc.0.conv.weight");

  save_checkpoint(disc, dir / "d.ckpt");
  expect_kind([&] { load_generator(dir / "d.ckpt"); }, ErrorKind::Format);
  expect_kind([&] { load_generator(dir / "missing.ckpt"); }, ErrorKind::Io);
}

TEST_CASE("tensor container encoding round-trips") {
  Rng rng(84);
  std::vector<NamedTensor> ts{{"a", random_tensor(rng, {2, 3})}, {"b.c", random_tensor(rng, {1, 1, 2, 2})},
                              {"empty", Tensor({0})}};
  const auto bytes = encode_tensors(ts);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 4, kCheckpointMagic));
  const auto back = decode_tensors(bytes);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == ts[i].name);
    CHECK(back[i].tensor == ts[i].tensor);
  }
  CHECK(encode_tensors(back) == bytes);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(decode_tensors(part), Error);
  }
}
