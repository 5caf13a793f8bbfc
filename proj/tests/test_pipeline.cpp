// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "stst/error.hpp"
#include "stst/io.hpp"
#include "stst/pipeline.hpp"
#include "support.hpp"

using namespace stst;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Config;
}

DatasetManifest fake_manifest(std::size_t n) {
  DatasetManifest m;
  m.patch_size = 256;
  for (std::size_t i = 0; i < n; ++i) {
    m.entries.push_back({"p/" + std::to_string(i) + ".png", "f" + std::to_string(i / 30), i % 30, 0, 0,
                         Role::Unassigned, ""});
  }
  return m;
}

std::shared_ptr<const Generator> tiny_generator() {
  return std::make_shared<const Generator>(build_generator(GeneratorConfig::with_depth(4, 4), 3));
}

void put(const RgbImage& img, const fs::path& path) {
  fs::create_directories(path.parent_path());
  write_image(img, path);
}

bool all_white(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  for (std::size_t y = y0; y < y0 + h; ++y) {
    for (std::size_t x = x0; x < x0 + w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        if (img.at(x, y, c) != 255) return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("tile grid arithmetic") {
  const auto g = tile_grid(1663, 1485, 256, 30);
  REQUIRE(g.size() == 30);
  CHECK(g.front() == TileOrigin{0, 0});
  CHECK(g[1] == TileOrigin{256, 0});
  CHECK(g[6] == TileOrigin{0, 256});
  CHECK(g.back() == TileOrigin{1280, 1024});
  CHECK(tile_grid(1663, 1485, 256, 7).size() == 7);
  CHECK(tile_grid(256, 256, 256, 30).size() == 1);
  CHECK(kind_of([] { tile_grid(255, 256, 256, 30); }) == ErrorKind::FrameTooSmall);
  CHECK(kind_of([] { tile_grid(256, 255, 256, 30); }) == ErrorKind::FrameTooSmall);

  Rng rng(110);
  const auto frame = testing::random_rgb(rng, 256, 256);
  const auto one = patchify(frame);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == frame);
}

TEST_CASE("patches reassemble into the covered frame region") {
  const int failed = testing::for_all(111, 20, [](Rng& rng, int) {
    const std::size_t size = 4 + rng.below(8);
    const std::size_t w = size + rng.below(40), h = size + rng.below(40);
    const auto frame = testing::random_rgb(rng, w, h);
    const auto grid = tile_grid(w, h, size, 1000);
    const auto tiles = patchify(frame, size, 1000);
    if (tiles.size() != (w / size) * (h / size) || grid.size() != tiles.size()) return false;
    std::vector<int> cover(w * h, 0);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          ++cover[(grid[t].y + y) * w + grid[t].x + x];
          for (std::size_t c = 0; c < 3; ++c) {
            if (tiles[t].at(x, y, c) != frame.at(grid[t].x + x, grid[t].y + y, c)) return false;
          }
        }
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const bool inside = x < (w / size) * size && y < (h / size) * size;
        if (cover[y * w + x] != (inside ? 1 : 0)) return false;
      }
    }
    return true;
  });
  CHECK(failed == -1);
}

TEST_CASE("split partitions the manifest reproducibly") {
  const auto base = fake_manifest(12720);
  const auto m = split_manifest(base, 3000, 500, 7);
  CHECK(m.count(Role::Train) == 3000);
  CHECK(m.count(Role::Test) == 500);
  CHECK(m.count(Role::Unassigned) == 9220);
  CHECK(m.seed == 7u);
  for (std::size_t i = 0; i < m.entries.size(); ++i) CHECK(m.entries[i].path == base.entries[i].path);
  CHECK(split_manifest(base, 3000, 500, 7) == m);
  CHECK(split_manifest(base, 3000, 500, 8) != m);
  // Re-splitting resets earlier roles.
  CHECK(split_manifest(m, 10, 5, 1).count(Role::Train) == 10);
  CHECK(kind_of([&] { split_manifest(base, 12720, 1, 0); }) == ErrorKind::NotEnoughPatches);

  const int failed = testing::for_all(112, 30, [](Rng& rng, int) {
    const std::size_t n = 1 + rng.below(200);
    const std::size_t tr = rng.below(n + 1), te = rng.below(n - tr + 1);
    const auto s = split_manifest(fake_manifest(n), tr, te, rng.below(1000000));
    return s.count(Role::Train) == tr && s.count(Role::Test) == te &&
           s.count(Role::Train) + s.count(Role::Test) + s.count(Role::Unassigned) == n;
  });
  CHECK(failed == -1);
}

TEST_CASE("manifest serialisation") {
  auto m = split_manifest(fake_manifest(40), 10, 5, 3);
  m.entries[3].sha256 = "00ff";
  const auto back = manifest_from_json(to_json(m));
  CHECK(back == m);
  const auto j = to_json(m);
  CHECK(j["counts"]["train"] == 10);

  const auto dir = testing::scratch_dir("manifest");
  save_manifest(m, dir / "m.json");
  CHECK(load_manifest(dir / "m.json") == m);

  auto dup = m;
  dup.entries[1].path = dup.entries[0].path;
  CHECK(kind_of([&] { dup.validate(); }) == ErrorKind::Format);
  auto bad = to_json(m);
  bad["entries"][0]["role"] = "holdout";
  CHECK(kind_of([&] { manifest_from_json(bad); }) == ErrorKind::Format);
  auto miscounted = to_json(m);
  miscounted["counts"]["train"] = 11;
  CHECK(kind_of([&] { manifest_from_json(miscounted); }) == ErrorKind::Format);
  CHECK(to_string(role_from_string("test")) == "test");
}

TEST_CASE("frames on disk become patches and gray/RGB pairs") {
  const auto dir = testing::scratch_dir("patchify");
  put(testing::synthetic_tissue(1, 70, 50), dir / "frames" / "b.png");
  put(testing::synthetic_tissue(2, 33, 40), dir / "frames" / "a.ppm");
  const auto m = patchify_frames(dir / "frames", dir / "patches", 16, 5, dir);
  REQUIRE(m.entries.size() == 4 + 5);
  CHECK(m.entries[0].frame_id == "a");
  CHECK(m.entries[0].path == "patches/a_p00.png");
  CHECK(m.entries[4].frame_id == "b");
  CHECK(m.entries[8].patch_index == 4);
  CHECK(m.entries[8].x == 0);
  CHECK(m.entries[8].y == 16);
  for (const auto& e : m.entries) CHECK(sha256_file(dir / e.path) == e.sha256);

  const auto split = split_manifest(m, 4, 2, 5);
  const auto train = make_pairs(split, Role::Train, dir);
  REQUIRE(train.size() == 4);
  std::size_t k = 0;
  for (const auto& e : split.entries) {
    if (e.role != Role::Train) continue;
    CHECK(train[k].path == e.path);
    CHECK(train[k].rgb == read_image(dir / e.path));
    CHECK(to_grayscale(train[k].rgb) == train[k].gray);
    ++k;
  }
  CHECK(make_pairs(m, Role::Train, dir).empty());
  CHECK(kind_of([&] { make_pairs(split, Role::Test, dir / "nowhere"); }) == ErrorKind::Io);
}

TEST_CASE("normaliser construction enforces the reference contract") {
  Rng rng(113);
  const auto ref = testing::render_two_stain(rng, testing::random_he_like(rng), 32, 32, 0.01);
  for (auto m : {Method::Reinhard, Method::Macenko, Method::Vahadane}) {
    CHECK(kind_of([&] { Normalizer::create(m, {}); }) == ErrorKind::Usage);
    NormalizerOptions o;
    o.reference = ref;
    CHECK(Normalizer::create(m, o).method() == m);
  }
  NormalizerOptions stst;
  stst.generator = tiny_generator();
  CHECK_NOTHROW(Normalizer::create(Method::Stst, stst));
  CHECK(kind_of([&] { Normalizer::create(Method::Stst, {}); }) == ErrorKind::Usage);
  stst.reference = ref;
  CHECK(kind_of([&] { Normalizer::create(Method::Stst, stst); }) == ErrorKind::Usage);
  CHECK(kind_of([] { method_from_string("khan"); }) == ErrorKind::Usage);
  for (auto m : kAllMethods) CHECK(method_from_string(to_string(m)) == m);
}

TEST_CASE("parallel normalisation matches the serial order") {
  Rng rng(114);
  std::vector<RgbImage> patches;
  for (int i = 0; i < 9; ++i) patches.push_back(testing::render_two_stain(rng, testing::random_he_like(rng), 16, 16, 0.01));
  NormalizerOptions reinhard;
  reinhard.reference = patches[0];
  NormalizerOptions stst;
  stst.generator = tiny_generator();
  stst.seed = 4;
  for (const auto& n : {Normalizer::create(Method::Reinhard, reinhard), Normalizer::create(Method::Stst, stst)}) {
    const auto serial = normalize_all(n, patches, 1);
    const auto parallel = normalize_all(n, patches, 3);
    REQUIRE(serial.size() == patches.size());
    CHECK(serial == parallel);
    for (std::size_t i = 0; i < patches.size(); ++i) CHECK(serial[i] == n.apply(patches[i], i));
  }
  CHECK(kind_of([&] { normalize_all(Normalizer::create(Method::Reinhard, reinhard), patches, 0); }) ==
        ErrorKind::Usage);
  std::vector<RgbImage> odd{patches[0], testing::synthetic_tissue(1, 20, 16)};
  try {
    normalize_all(Normalizer::create(Method::Stst, stst), odd, 2);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
    CHECK(std::string(e.what()).find("patch 1") != std::string::npos);
  }
}

TEST_CASE("training settings round-trip through the key-value format") {
  const auto cfg = KeyValueConfig::parse(
      "epochs = 3\nlr = 0.0005\nseed = 9\nmax_steps = 40\ngenerator.depth = 4\ngenerator.base_filters = 4\n"
      "generator.dropout_levels = 1, 3\ndiscriminator.num_layers = 1\n");
  const auto s = train_settings_from_config(cfg);
  CHECK(s.train.epochs == 3);
  CHECK(s.train.lr == 0.0005);
  CHECK(s.train.lambda_l1 == 100.0);
  CHECK(s.init_seed == 9);
  CHECK(s.generator.depth == 4);
  CHECK(s.generator.dropout_levels == std::set<int>{1, 3});
  CHECK(s.discriminator.num_layers == 1);
  const auto again = train_settings_from_config(to_config(s));
  CHECK(to_config(again).serialize() == to_config(s).serialize());
  CHECK(again.train.lr == s.train.lr);

  CHECK(kind_of([] { train_settings_from_config(KeyValueConfig::parse("learning_rate = 1\n")); }) == ErrorKind::Config);
  CHECK(kind_of([] { train_settings_from_config(KeyValueConfig::parse("batch_size = 4\n")); }) == ErrorKind::Config);
  CHECK(kind_of([] { train_settings_from_config(KeyValueConfig::parse("generator.dropout_levels = x\n")); }) ==
        ErrorKind::Config);
  const auto none = train_settings_from_config(KeyValueConfig::parse("generator.dropout_levels = none\n"));
  CHECK(none.generator.dropout_levels.empty());
}

TEST_CASE("run_training writes its artefacts") {
  const auto dir = testing::scratch_dir("run_training");
  for (int i = 0; i < 3; ++i) put(testing::synthetic_tissue(i + 1, 16, 16), dir / "frames" / ("f" + std::to_string(i) + ".png"));
  auto m = split_manifest(patchify_frames(dir / "frames", dir / "patches", 16, 1, dir), 2, 1, 1);
  save_manifest(m, dir / "manifest.json");
  TrainSettings s;
  s.generator = GeneratorConfig::with_depth(4, 4);
  s.discriminator = {1, 4, 4};
  s.train.epochs = 2;
  s.train.seed = 5;
  const auto run = run_training(dir / "manifest.json", s, dir / "out");
  CHECK(run.result.log.size() == 4);
  CHECK(fs::exists(run.best_checkpoint));
  CHECK(fs::exists(dir / "out" / "loss_log.csv"));
  CHECK(fs::exists(dir / "out" / "train_config.resolved"));
  const auto meta = nlohmann::json::parse(read_file(dir / "out" / "run.json"));
  CHECK(meta["steps"] == 4);
  CHECK(meta["train_patches"].size() == 2);
  CHECK(meta["manifest_sha256"] == sha256_file(dir / "manifest.json"));
  CHECK(load_generator(run.best_checkpoint).config().depth == 4);

  save_manifest(split_manifest(m, 0, 1, 1), dir / "empty.json");
  CHECK(kind_of([&] { run_training(dir / "empty.json", s, dir / "out2"); }) == ErrorKind::NotEnoughPatches);
}

TEST_CASE("directory evaluation") {
  const auto dir = testing::scratch_dir("evaluate");
  for (int i = 0; i < 3; ++i) {
    const auto img = testing::synthetic_tissue(i + 10, 16, 16);
    put(img, dir / "truth" / ("p" + std::to_string(i) + ".png"));
    put(img, dir / "pred" / ("p" + std::to_string(i) + ".png"));
  }
  const auto r = evaluate_directories(dir / "pred", dir / "truth", {}, std::nullopt, 2);
  CHECK(r.files.size() == 3);
  CHECK(r.metrics[Metric::SSIM].mean == doctest::Approx(1.0));
  CHECK(r.metrics[Metric::PSNR].excluded == 3);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(r.separation.per_label[k].count == 3);
    CHECK(r.separation.per_label[k].mean == 0.0);
  }
  const auto j = to_json(r);
  CHECK(j.contains("stain_separation"));
  CHECK(j["patches"].size() == 3);

  put(testing::synthetic_tissue(1, 16, 16), dir / "pred" / "extra.png");
  CHECK(kind_of([&] { evaluate_directories(dir / "pred", dir / "truth", {}, std::nullopt, 1); }) == ErrorKind::Io);
  fs::create_directories(dir / "empty");
  CHECK(kind_of([&] { evaluate_directories(dir / "empty", dir / "truth", {}, std::nullopt, 1); }) ==
        ErrorKind::NotEnoughPatches);
}

TEST_CASE("benchmark bookkeeping") {
  Rng rng(115);
  std::vector<RgbImage> patches;
  for (int i = 0; i < 4; ++i) patches.push_back(testing::render_two_stain(rng, testing::random_he_like(rng), 16, 16, 0.01));
  NormalizerOptions o;
  o.reference = patches[0];
  const std::vector<Method> methods{Method::Reinhard, Method::Stst, Method::Macenko};

  const auto empty = run_bench(methods, {}, o, 2);
  REQUIRE(empty.size() == 3);
  for (const auto& r : std::span(empty).subspan(0, 1)) {
    CHECK(r.patch_count == 0);
    CHECK(r.total_seconds == 0.0);
    CHECK(!r.failed);
  }

  const auto results = run_bench(methods, patches, o, 1);
  REQUIRE(results.size() == 3);
  CHECK(results[0].method == "reinhard");
  CHECK(!results[0].failed);
  CHECK(results[0].repetitions == 1);
  CHECK(results[0].total_seconds > 0.0);
  CHECK(results[0].per_patch_ms == doctest::Approx(results[0].total_seconds * 1000.0 / 4));
  // No generator: stst fails but the suite carries on.
  CHECK(results[1].failed);
  CHECK(!results[1].error.empty());
  CHECK(!results[2].failed);
  CHECK(!results[0].machine.empty());

  const auto csv = bench_table_csv(results);
  CHECK(csv.rfind("Methods,Time (sec),Per patch (ms),Patches,Status\n", 0) == 0);
  CHECK(csv.find("stst,n/a,n/a,4,failed") != std::string::npos);
  const auto j = to_json(std::span<const BenchResult>(results));
  CHECK(j["policy"] == std::string(kBenchPolicy));
  CHECK(j["results"][1]["failed"] == true);
  CHECK(kind_of([&] { run_bench(methods, patches, o, 0); }) == ErrorKind::Usage);
}

TEST_CASE("montage layout") {
  Rng rng(116);
  SUBCASE("single cell adds only the label band") {
    const auto img = testing::random_rgb(rng, 20, 10);
    const auto out = render_montage({{{"x", img}}});
    CHECK(out.width() == 20);
    CHECK(out.height() == 10 + kMontageLabelBand);
    CHECK(crop(out, 0, kMontageLabelBand, 20, 10) == img);
    CHECK(!all_white(out, 0, 0, 20, kMontageLabelBand));
  }
  SUBCASE("2x3 grid") {
    MontageRows rows(2);
    for (auto& row : rows) {
      for (int c = 0; c < 3; ++c) row.push_back({"c" + std::to_string(c), testing::random_rgb(rng, 16, 16)});
    }
    const auto out = render_montage(rows);
    CHECK(out.width() == 3 * 16 + 2 * kMontageGutter);
    CHECK(out.height() == 2 * (16 + kMontageLabelBand));
    CHECK(crop(out, 2 * (16 + kMontageGutter), 2 * kMontageLabelBand + 16, 16, 16) == rows[1][2].image);
    CHECK(all_white(out, 16, kMontageLabelBand, kMontageGutter, 16));
  }
  SUBCASE("unlabelled cells leave the band white") {
    const auto out = render_montage({{{"", testing::uniform_rgb(8, 8, 0, 0, 0)}}});
    CHECK(all_white(out, 0, 0, 8, kMontageLabelBand));
  }
  SUBCASE("mismatched cells are rejected") {
    MontageRows rows{{{"a", testing::random_rgb(rng, 8, 8)}, {"b", testing::random_rgb(rng, 9, 8)}}};
    CHECK(kind_of([&] { render_montage(rows); }) == ErrorKind::DimensionMismatch);
    CHECK(kind_of([] { render_montage({}); }) == ErrorKind::DimensionMismatch);
  }
  SUBCASE("spec file and emission") {
    const auto dir = testing::scratch_dir("montage");
    const auto a = testing::random_rgb(rng, 8, 8), b = testing::random_rgb(rng, 8, 8);
    write_image(a, dir / "a.png");
    write_image(b, dir / "b.png");
    write_text(dir / "rows.json", R"({"rows": [[{"label": "A", "image": "a.png"}, {"label": "B", "image": "b.png"}]]})");
    const auto rows = load_montage_spec(dir / "rows.json");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][1].image == b);
    emit_montage(rows, dir / "m.png");
    CHECK(read_image(dir / "m.png") == render_montage(rows));
    write_text(dir / "bad.json", "{\"rows\": 3");
    CHECK(kind_of([&] { load_montage_spec(dir / "bad.json"); }) == ErrorKind::Format);
  }
  CHECK(text_width("") == 0);
  CHECK(text_width("AB") > text_width("A"));
}
