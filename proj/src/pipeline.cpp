// SPDX-License-Identifier: Apache-2.0
#include "stst/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "stst/error.hpp"
#include "stst/io.hpp"
#include "stst/rng.hpp"

namespace stst {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- patches -------------------------------------------------------------

std::vector<TileOrigin> tile_grid(std::size_t width, std::size_t height, std::size_t size, std::size_t max_per_frame) {
  if (size == 0) throw Error(ErrorKind::Config, "patch size must be >= 1");
  if (width < size || height < size) {
    throw Error(ErrorKind::FrameTooSmall, "frame " + std::to_string(width) + "x" + std::to_string(height) +
                                              " is smaller than the " + std::to_string(size) + " px tile");
  }
  std::vector<TileOrigin> out;
  for (std::size_t ty = 0; ty + size <= height; ty += size) {
    for (std::size_t tx = 0; tx + size <= width; tx += size) {
      if (out.size() == max_per_frame) return out;
      out.push_back({tx, ty});
    }
  }
  return out;
}

std::vector<RgbImage> patchify(const RgbImage& frame, std::size_t size, std::size_t max_per_frame) {
  std::vector<RgbImage> out;
  for (const auto& t : tile_grid(frame.width(), frame.height(), size, max_per_frame)) {
    out.push_back(crop(frame, t.x, t.y, size, size));
  }
  return out;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Train: return "train";
    case Role::Test: return "test";
    case Role::Unassigned: return "unassigned";
  }
  return "?";
}

Role role_from_string(std::string_view s) {
  if (s == "train") return Role::Train;
  if (s == "test") return Role::Test;
  if (s == "unassigned") return Role::Unassigned;
  throw Error(ErrorKind::Format, "unknown manifest role '" + std::string(s) + "'");
}

std::size_t DatasetManifest::count(Role role) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.role == role; }));
}

std::vector<ManifestEntry> DatasetManifest::subset(Role role) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [&](const ManifestEntry& e) { return e.role == role; });
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.path).second) throw Error(ErrorKind::Format, "manifest lists '" + e.path + "' twice");
  }
}

json to_json(const DatasetManifest& m) {
  json j;
  j["patch_size"] = m.patch_size;
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["counts"] = {{"train", m.count(Role::Train)},
                 {"test", m.count(Role::Test)},
                 {"unassigned", m.count(Role::Unassigned)}};
  auto& entries = j["entries"];
  entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"path", e.path},
                       {"frame", e.frame_id},
                       {"index", e.patch_index},
                       {"x", e.x},
                       {"y", e.y},
                       {"role", to_string(e.role)},
                       {"sha256", e.sha256}});
  }
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.patch_size = j.at("patch_size").get<std::size_t>();
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.path = e.at("path").get<std::string>();
      me.frame_id = e.at("frame").get<std::string>();
      me.patch_index = e.at("index").get<std::size_t>();
      me.x = e.at("x").get<std::size_t>();
      me.y = e.at("y").get<std::size_t>();
      me.role = role_from_string(e.at("role").get<std::string>());
      me.sha256 = e.value("sha256", std::string{});
      m.entries.push_back(std::move(me));
    }
    m.validate();
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      if (c.at("train").get<std::size_t>() != m.count(Role::Train) ||
          c.at("test").get<std::size_t>() != m.count(Role::Test) ||
          c.at("unassigned").get<std::size_t>() != m.count(Role::Unassigned)) {
        throw Error(ErrorKind::Format, "manifest counts disagree with its entries");
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed manifest: ") + e.what());
  }
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  m.validate();
  write_text(path, to_json(m).dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, "'" + path.string() + "': " + e.what());
  }
  return manifest_from_json(j);
}

DatasetManifest patchify_frames(const fs::path& input_dir, const fs::path& out_dir, std::size_t size,
                                std::size_t per_frame, const fs::path& manifest_dir) {
  fs::create_directories(out_dir);
  DatasetManifest m;
  m.patch_size = size;
  const auto rel_dir = fs::relative(out_dir, manifest_dir.empty() ? fs::path(".") : manifest_dir);
  for (const auto& frame_path : list_images(input_dir)) {
    const auto frame = read_image(frame_path);
    const auto grid = tile_grid(frame.width(), frame.height(), size, per_frame);
    const auto stem = frame_path.stem().string();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto patch = crop(frame, grid[i].x, grid[i].y, size, size);
      std::ostringstream name;
      name << stem << "_p" << (i < 10 ? "0" : "") << i << ".png";
      const auto bytes = encode_png(patch);
      write_file(out_dir / name.str(), bytes);
      m.entries.push_back({(rel_dir / name.str()).generic_string(), stem, i, grid[i].x, grid[i].y, Role::Unassigned,
                           sha256_hex(bytes)});
    }
  }
  m.validate();
  return m;
}

DatasetManifest split_manifest(DatasetManifest manifest, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  const auto total = manifest.entries.size();
  if (n_train + n_test > total) {
    throw Error(ErrorKind::NotEnoughPatches, "requested " + std::to_string(n_train) + " train + " +
                                                 std::to_string(n_test) + " test patches but only " +
                                                 std::to_string(total) + " exist");
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  for (auto& e : manifest.entries) e.role = Role::Unassigned;
  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    manifest.entries[order[i]].role = i < n_train ? Role::Train : Role::Test;
  }
  manifest.seed = seed;
  return manifest;
}

std::vector<GrayRgbPair> make_pairs(const DatasetManifest& manifest, Role role, const fs::path& base_dir) {
  std::vector<GrayRgbPair> out;
  for (const auto& e : manifest.entries) {
    if (e.role != role) continue;
    auto rgb = read_image(base_dir / e.path);
    auto gray = to_grayscale(rgb);
    out.push_back({std::move(gray), std::move(rgb), e.path});
  }
  return out;
}

// ---- normalisation -------------------------------------------------------

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Reinhard: return "reinhard";
    case Method::Macenko: return "macenko";
    case Method::Vahadane: return "vahadane";
    case Method::Stst: return "stst";
  }
  return "?";
}

Method method_from_string(std::string_view s) {
  for (auto m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::Usage, "unknown method '" + std::string(s) + "' (reinhard, macenko, vahadane, stst)");
}

bool requires_reference(Method m) { return m != Method::Stst; }

Normalizer Normalizer::create(Method method, const NormalizerOptions& options) {
  Normalizer n;
  n.method_ = method;
  n.options_ = options;
  if (requires_reference(method) && !options.reference) {
    throw Error(ErrorKind::Usage, std::string(to_string(method)) + " needs a reference image");
  }
  switch (method) {
    case Method::Reinhard:
      n.reinhard_ = reinhard_fit(*options.reference);
      break;
    case Method::Macenko:
      n.stain_state_ = macenko_fit(*options.reference, options.macenko);
      break;
    case Method::Vahadane:
      n.stain_state_ = vahadane_fit(*options.reference, options.snmf);
      break;
    case Method::Stst:
      if (options.reference) throw Error(ErrorKind::Usage, "stst takes no reference image");
      if (!options.generator) throw Error(ErrorKind::Usage, "stst needs a generator checkpoint");
      break;
  }
  n.options_.reference.reset();
  return n;
}

RgbImage Normalizer::apply(const RgbImage& source, std::size_t index) const {
  switch (method_) {
    case Method::Reinhard: return reinhard_transform(source, reinhard_);
    case Method::Macenko: return macenko_normalize(source, stain_state_, options_.macenko);
    case Method::Vahadane: return vahadane_normalize(source, stain_state_, options_.snmf);
    case Method::Stst:
      return restain(*options_.generator, source, {options_.stst_dropout, derive_seed(options_.seed, index)});
  }
  return source;
}

std::vector<RgbImage> normalize_all(const Normalizer& normalizer, std::span<const RgbImage> sources, int workers) {
  if (workers < 1) throw Error(ErrorKind::Usage, "worker count must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(sources.size());
  std::vector<RgbImage> out(sources.size());
  std::vector<std::exception_ptr> errors(sources.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = normalizer.apply(sources[k], k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      throw Error(e.kind(), "patch " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

// ---- training ------------------------------------------------------------

namespace {

const std::set<std::string> kTrainKeys{
    "lambda_l1",          "lr",
    "beta1",              "beta2",
    "epochs",             "batch_size",
    "halve_disc_loss",    "seed",
    "checkpoint_every",   "max_steps",
    "init_seed",          "generator.depth",
    "generator.base_filters", "generator.skip_connections",
    "generator.dropout_levels", "discriminator.num_layers",
    "discriminator.base_filters"};

std::set<int> parse_levels(const std::string& s) {
  std::set<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(' ');
    int level = 0;
    const auto* first = item.data() + b;
    const auto* last = item.data() + e + 1;
    if (auto [ptr, ec] = std::from_chars(first, last, level); ec != std::errc() || ptr != last) {
      throw Error(ErrorKind::Config, "generator.dropout_levels: '" + item + "' is not an integer");
    }
    out.insert(level);
  }
  return out;
}

std::string join_levels(const std::set<int>& levels) {
  std::string out;
  for (int l : levels) out += (out.empty() ? "" : ",") + std::to_string(l);
  return out.empty() ? "none" : out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

TrainSettings train_settings_from_config(const KeyValueConfig& cfg) {
  cfg.require_known(kTrainKeys);
  TrainSettings s;
  auto& t = s.train;
  t.lambda_l1 = cfg.get_double("lambda_l1", t.lambda_l1);
  t.lr = cfg.get_double("lr", t.lr);
  t.beta1 = cfg.get_double("beta1", t.beta1);
  t.beta2 = cfg.get_double("beta2", t.beta2);
  t.epochs = static_cast<int>(cfg.get_int("epochs", t.epochs));
  t.batch_size = static_cast<int>(cfg.get_int("batch_size", t.batch_size));
  t.halve_disc_loss = cfg.get_bool("halve_disc_loss", t.halve_disc_loss);
  t.seed = cfg.get_uint("seed", t.seed);
  t.checkpoint_every = cfg.get_uint("checkpoint_every", t.checkpoint_every);
  t.max_steps = cfg.get_uint("max_steps", t.max_steps);
  t.validate();
  s.init_seed = cfg.get_uint("init_seed", t.seed);

  const auto depth = static_cast<int>(cfg.get_int("generator.depth", s.generator.depth));
  const auto base = static_cast<std::size_t>(cfg.get_uint("generator.base_filters", s.generator.base_filters));
  s.generator = GeneratorConfig::with_depth(depth, base);
  s.generator.skip_connections = cfg.get_bool("generator.skip_connections", true);
  if (const auto levels = cfg.get("generator.dropout_levels")) {
    s.generator.dropout_levels = *levels == "none" ? std::set<int>{} : parse_levels(*levels);
  }
  s.generator.validate();
  s.discriminator.num_layers = static_cast<int>(cfg.get_int("discriminator.num_layers", s.discriminator.num_layers));
  s.discriminator.base_filters =
      static_cast<std::size_t>(cfg.get_uint("discriminator.base_filters", s.discriminator.base_filters));
  s.discriminator.validate();
  return s;
}

KeyValueConfig to_config(const TrainSettings& s) {
  KeyValueConfig c;
  const auto& t = s.train;
  c.set("lambda_l1", format_double(t.lambda_l1));
  c.set("lr", format_double(t.lr));
  c.set("beta1", format_double(t.beta1));
  c.set("beta2", format_double(t.beta2));
  c.set("epochs", std::to_string(t.epochs));
  c.set("batch_size", std::to_string(t.batch_size));
  c.set("halve_disc_loss", t.halve_disc_loss ? "true" : "false");
  c.set("seed", std::to_string(t.seed));
  c.set("checkpoint_every", std::to_string(t.checkpoint_every));
  c.set("max_steps", std::to_string(t.max_steps));
  c.set("init_seed", std::to_string(s.init_seed));
  c.set("generator.depth", std::to_string(s.generator.depth));
  c.set("generator.base_filters", std::to_string(s.generator.base_filters));
  c.set("generator.skip_connections", s.generator.skip_connections ? "true" : "false");
  c.set("generator.dropout_levels", join_levels(s.generator.dropout_levels));
  c.set("discriminator.num_layers", std::to_string(s.discriminator.num_layers));
  c.set("discriminator.base_filters", std::to_string(s.discriminator.base_filters));
  return c;
}

TrainRun run_training(const fs::path& manifest_path, const TrainSettings& settings, const fs::path& out_dir) {
  const auto manifest = load_manifest(manifest_path);
  const auto pairs = make_pairs(manifest, Role::Train, manifest_path.parent_path());
  if (pairs.empty()) throw Error(ErrorKind::NotEnoughPatches, "manifest has no train patches; run split first");

  std::vector<TrainingPair> dataset;
  for (const auto& p : pairs) {
    settings.generator.check_input(p.rgb.height(), p.rgb.width());
    dataset.push_back(make_training_pair(p.gray, p.rgb));
  }
  const auto gen = build_generator(settings.generator, derive_seed(settings.init_seed, 0));
  const auto disc = build_discriminator(settings.discriminator, derive_seed(settings.init_seed, 1));

  fs::create_directories(out_dir);
  TrainRun run;
  run.result = train(gen, disc, dataset, settings.train, TrainOutputs{out_dir});
  run.best_checkpoint = out_dir / "generator_best.ckpt";

  const auto resolved = to_config(settings);
  write_text(out_dir / "train_config.resolved", resolved.serialize());
  json meta;
  meta["config"] = resolved.entries();
  meta["manifest_sha256"] = sha256_file(manifest_path);
  meta["train_patches"] = json::array();
  for (const auto& e : manifest.entries) {
    if (e.role == Role::Train) meta["train_patches"].push_back({{"path", e.path}, {"sha256", e.sha256}});
  }
  meta["steps"] = run.result.log.size();
  meta["best_epoch"] = run.result.best_epoch ? json(*run.result.best_epoch) : json(nullptr);
  meta["best_rule"] = "lowest trailing-epoch mean g_l1_loss";
  write_text(out_dir / "run.json", meta.dump(2) + "\n");
  return run;
}

// ---- evaluation ----------------------------------------------------------

StainSeparation stain_separation(std::span<const ImagePair> pairs, const std::optional<StainMatrix>& reference) {
  const std::array<StainLabel, 3> labels{StainLabel::Hematoxylin, StainLabel::Eosin, StainLabel::Background};
  std::array<std::vector<std::optional<double>>, 3> values;
  for (const auto& [pred, truth] : pairs) {
    std::map<StainLabel, std::optional<double>> d;
    try {
      const auto est = estimate_stain_appearance(pred);
      const auto ref = reference ? *reference : estimate_stain_appearance(truth);
      d = stain_vector_distance(est, ref, DistanceSpace::RenderedRgb);
    } catch (const Error&) {
      // Unseparable patch (no tissue or no shared labels): every label undefined.
    }
    for (std::size_t k = 0; k < 3; ++k) {
      auto it = d.find(labels[k]);
      values[k].push_back(it == d.end() ? std::nullopt : it->second);
    }
  }
  StainSeparation s;
  for (std::size_t k = 0; k < 3; ++k) s.per_label[k] = aggregate(values[k]);
  return s;
}

EvaluationReport evaluate_directories(const fs::path& pred_dir, const fs::path& truth_dir, const MetricConfig& cfg,
                                      const std::optional<StainMatrix>& reference, int workers) {
  if (workers < 1) throw Error(ErrorKind::Usage, "worker count must be >= 1");
  cfg.validate();
  EvaluationReport r;
  std::vector<ImagePair> pairs;
  std::string hash_input;
  for (const auto& p : list_images(pred_dir)) {
    const auto name = p.filename();
    const auto t = truth_dir / name;
    if (!fs::exists(t)) throw Error(ErrorKind::Io, "no ground truth for '" + name.string() + "' in " + truth_dir.string());
    const auto pb = read_file(p), tb = read_file(t);
    pairs.emplace_back(decode_image(pb), decode_image(tb));
    hash_input += name.string() + "\t" + sha256_hex(pb) + "\t" + sha256_hex(tb) + "\n";
    r.files.push_back(name.string());
  }
  if (pairs.empty()) throw Error(ErrorKind::NotEnoughPatches, "no images found in '" + pred_dir.string() + "'");

  r.metrics.config = cfg;
  r.metrics.manifest_hash = sha256_hex(hash_input);
  r.metrics.patches.resize(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      r.metrics.patches[k] = evaluate_pair(pairs[k].first, pairs[k].second, cfg);
      r.metrics.patches[k].id = r.files[k];
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      throw Error(e.kind(), r.files[k] + ": " + e.what());
    }
  }
  recompute_aggregates(r.metrics);
  r.separation = stain_separation(pairs, reference);
  return r;
}

json to_json(const EvaluationReport& r) {
  json j = to_json(r.metrics);
  json sep;
  const std::array<std::string, 3> names{"H", "E", "Bg"};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& a = r.separation.per_label[k];
    sep[names[k]] = {{"mean", a.count ? json(a.mean) : json(nullptr)},
                     {"std", a.count ? json(a.std) : json(nullptr)},
                     {"count", a.count},
                     {"excluded", a.excluded}};
  }
  sep["distance_space"] = "rendered RGB at unit concentration, i0 = 255";
  j["stain_separation"] = sep;
  return j;
}

}  // namespace stst
