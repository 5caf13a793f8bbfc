// SPDX-License-Identifier: Apache-2.0
#include "stst/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stst/config.hpp"
#include "stst/error.hpp"
#include "stst/io.hpp"
#include "stst/kernels.hpp"
#include "stst/pipeline.hpp"

namespace stst {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PatchifyArgs {
  std::string input, out, manifest;
  std::size_t size = 256;
  std::size_t per_frame = 30;
};

struct SplitArgs {
  std::string manifest, out;
  std::size_t train = 3000;
  std::size_t test = 500;
  std::uint64_t seed = 0;
};

struct NormalizeArgs {
  std::string method, reference, checkpoint, input, output;
  std::uint64_t seed = 0;
  int workers = 1;
  bool no_dropout = false;
};

struct TrainArgs {
  std::string manifest, config, out;
};

struct EvaluateArgs {
  std::string pred, truth, out, csv, stains, method = "prediction";
  int workers = 1;
};

struct BenchArgs {
  std::string methods = "all", patches, reference, checkpoint, out, csv;
  int reps = 3;
  std::uint64_t seed = 0;
};

struct MontageArgs {
  std::string rows, out;
};

fs::path parent_or_dot(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

int do_patchify(const PatchifyArgs& a, std::ostream& out) {
  const fs::path manifest(a.manifest);
  ensure_parent(manifest);
  const auto m = patchify_frames(a.input, a.out, a.size, a.per_frame, parent_or_dot(manifest));
  save_manifest(m, manifest);
  out << "patchify: " << m.entries.size() << " patches of " << a.size << "x" << a.size << " -> " << a.out << "\n";
  return 0;
}

int do_split(const SplitArgs& a, std::ostream& out) {
  const fs::path in(a.manifest);
  const fs::path dst = a.out.empty() ? in : fs::path(a.out);
  auto m = split_manifest(load_manifest(in), a.train, a.test, a.seed);
  const auto from = parent_or_dot(in), to = parent_or_dot(dst);
  if (fs::weakly_canonical(from) != fs::weakly_canonical(to)) {
    fs::create_directories(to);
    for (auto& e : m.entries) e.path = fs::relative(from / e.path, to).generic_string();
  }
  save_manifest(m, dst);
  out << "split: train " << m.count(Role::Train) << ", test " << m.count(Role::Test) << ", unassigned "
      << m.count(Role::Unassigned) << " (seed " << a.seed << ")\n";
  return 0;
}

int do_normalize(const NormalizeArgs& a, std::ostream& out) {
  const auto method = method_from_string(a.method);
  if (method == Method::Stst && !a.reference.empty()) {
    throw Error(ErrorKind::Usage, "--reference is not accepted by stst: it re-stains without a reference image");
  }
  if (requires_reference(method) && a.reference.empty()) {
    throw Error(ErrorKind::Usage, "--reference is required for " + a.method);
  }
  if (method == Method::Stst && a.checkpoint.empty()) throw Error(ErrorKind::Usage, "--checkpoint is required for stst");
  if (method != Method::Stst && !a.checkpoint.empty()) {
    throw Error(ErrorKind::Usage, "--checkpoint only applies to stst");
  }

  NormalizerOptions opts;
  opts.seed = a.seed;
  opts.stst_dropout = !a.no_dropout;
  if (!a.reference.empty()) opts.reference = read_image(a.reference);
  if (!a.checkpoint.empty()) opts.generator = std::make_shared<const Generator>(load_generator(a.checkpoint));
  const auto normalizer = Normalizer::create(method, opts);

  const auto files = list_images(a.input);
  std::vector<RgbImage> sources;
  json inputs = json::array();
  for (const auto& f : files) {
    const auto bytes = read_file(f);
    sources.push_back(decode_image(bytes));
    inputs.push_back({{"file", f.filename().string()}, {"sha256", sha256_hex(bytes)}});
  }
  const auto results = normalize_all(normalizer, sources, a.workers);

  fs::create_directories(a.output);
  for (std::size_t i = 0; i < files.size(); ++i) write_image(results[i], fs::path(a.output) / files[i].filename());

  json meta;
  meta["method"] = a.method;
  meta["seed"] = a.seed;
  meta["stst_dropout"] = !a.no_dropout;
  meta["reference_sha256"] = a.reference.empty() ? json(nullptr) : json(sha256_file(a.reference));
  meta["checkpoint_sha256"] = a.checkpoint.empty() ? json(nullptr) : json(sha256_file(a.checkpoint));
  meta["inputs"] = inputs;
  write_text(fs::path(a.output) / "normalize_run.json", meta.dump(2) + "\n");
  out << "normalize: " << files.size() << " patches with " << a.method << " -> " << a.output << "\n";
  return 0;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = a.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(a.config);
  const auto settings = train_settings_from_config(cfg);
  const auto run = run_training(a.manifest, settings, a.out);
  const auto& log = run.result.log;
  out << "train: " << log.size() << " steps";
  if (!log.empty()) out << ", final g_l1 " << log.back().g_l1_loss << ", d " << log.back().d_loss;
  out << " -> " << run.best_checkpoint.string() << "\n";
  return 0;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  std::optional<StainMatrix> reference;
  if (!a.stains.empty()) reference = stain_matrix_from_config(KeyValueConfig::load(a.stains));
  auto report = evaluate_directories(a.pred, a.truth, MetricConfig{}, reference, a.workers);
  report.metrics.method = a.method;
  ensure_parent(a.out);
  write_text(a.out, to_json(report).dump(2) + "\n");
  if (!a.csv.empty()) {
    ensure_parent(a.csv);
    const std::array<MetricReport, 1> one{report.metrics};
    write_text(a.csv, table_csv(one));
  }
  const auto& ssim = report.metrics[Metric::SSIM];
  out << "evaluate: " << report.files.size() << " pairs, SSIM " << ssim.mean << " ± " << ssim.std << " -> " << a.out
      << "\n";
  return 0;
}

int do_bench(const BenchArgs& a, std::ostream& out) {
  std::vector<Method> methods;
  if (a.methods == "all") {
    methods.assign(kAllMethods.begin(), kAllMethods.end());
  } else {
    std::stringstream in(a.methods);
    std::string item;
    while (std::getline(in, item, ',')) methods.push_back(method_from_string(item));
  }
  const bool classical = std::any_of(methods.begin(), methods.end(), requires_reference);
  if (classical && a.reference.empty()) throw Error(ErrorKind::Usage, "--reference is required for classical methods");

  NormalizerOptions opts;
  opts.seed = a.seed;
  if (!a.reference.empty()) opts.reference = read_image(a.reference);
  if (!a.checkpoint.empty()) opts.generator = std::make_shared<const Generator>(load_generator(a.checkpoint));
  std::vector<RgbImage> patches;
  for (const auto& f : list_images(a.patches)) patches.push_back(read_image(f));

  const auto results = run_bench(methods, patches, opts, a.reps);
  const auto table = bench_table_csv(results);
  out << table;
  if (!a.out.empty()) {
    ensure_parent(a.out);
    write_text(a.out, to_json(results).dump(2) + "\n");
  }
  if (!a.csv.empty()) {
    ensure_parent(a.csv);
    write_text(a.csv, table);
  }
  return 0;
}

int do_montage(const MontageArgs& a, std::ostream& out) {
  const auto rows = load_montage_spec(a.rows);
  ensure_parent(a.out);
  emit_montage(rows, a.out);
  out << "montage: " << rows.size() << " rows -> " << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stain normalisation toolkit for H&E patches", "stst"};
  app.require_subcommand(1);
  int workers_global = 0;
  app.add_option("--threads", workers_global, "OpenMP threads for the numerical kernels (0 = library default)");

  PatchifyArgs pa;
  auto* patchify_cmd = app.add_subcommand("patchify", "Tile frames into non-overlapping patches");
  patchify_cmd->add_option("--input", pa.input, "Directory of frames")->required();
  patchify_cmd->add_option("--size", pa.size, "Tile side in pixels")->capture_default_str();
  patchify_cmd->add_option("--per-frame", pa.per_frame, "Maximum tiles per frame")->capture_default_str();
  patchify_cmd->add_option("--out", pa.out, "Patch output directory")->required();
  patchify_cmd->add_option("--manifest", pa.manifest, "Manifest JSON to write")->required();

  SplitArgs sa;
  auto* split_cmd = app.add_subcommand("split", "Assign train/test roles with a seeded shuffle");
  split_cmd->add_option("--manifest", sa.manifest, "Manifest JSON")->required();
  split_cmd->add_option("--train", sa.train, "Train patch count")->capture_default_str();
  split_cmd->add_option("--test", sa.test, "Test patch count")->capture_default_str();
  split_cmd->add_option("--seed", sa.seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("--out", sa.out, "Write the split manifest here instead of in place");

  NormalizeArgs na;
  auto* normalize_cmd = app.add_subcommand("normalize", "Normalise a directory of patches");
  normalize_cmd->add_option("--method", na.method, "reinhard | macenko | vahadane | stst")->required();
  normalize_cmd->add_option("--reference", na.reference, "Reference image (classical methods only)");
  normalize_cmd->add_option("--checkpoint", na.checkpoint, "Generator checkpoint (stst only)");
  normalize_cmd->add_option("--input", na.input, "Input patch directory")->required();
  normalize_cmd->add_option("--output", na.output, "Output directory")->required();
  normalize_cmd->add_option("--seed", na.seed, "Dropout seed for stst")->capture_default_str();
  normalize_cmd->add_option("--workers", na.workers, "Patch-level worker threads")->capture_default_str();
  normalize_cmd->add_flag("--no-dropout", na.no_dropout, "Disable generator dropout at inference");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the grayscale-to-H&E generator");
  train_cmd->add_option("--manifest", ta.manifest, "Split manifest")->required();
  train_cmd->add_option("--config", ta.config, "key = value training configuration");
  train_cmd->add_option("--out", ta.out, "Checkpoint directory")->required();

  EvaluateArgs ea;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Full-reference metrics of predictions against ground truth");
  evaluate_cmd->add_option("--pred", ea.pred, "Prediction directory")->required();
  evaluate_cmd->add_option("--truth", ea.truth, "Ground-truth directory")->required();
  evaluate_cmd->add_option("--out", ea.out, "JSON report")->required();
  evaluate_cmd->add_option("--csv", ea.csv, "CSV table");
  evaluate_cmd->add_option("--stains", ea.stains, "Reference stain vectors (stain.H / stain.E / stain.Bg)");
  evaluate_cmd->add_option("--method", ea.method, "Column label for the report")->capture_default_str();
  evaluate_cmd->add_option("--workers", ea.workers, "Patch-level worker threads")->capture_default_str();

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Time the normalisers over a patch set");
  bench_cmd->add_option("--methods", ba.methods, "all or a comma list")->capture_default_str();
  bench_cmd->add_option("--patches", ba.patches, "Patch directory")->required();
  bench_cmd->add_option("--reference", ba.reference, "Reference image for the classical methods");
  bench_cmd->add_option("--checkpoint", ba.checkpoint, "Generator checkpoint for stst");
  bench_cmd->add_option("--reps", ba.reps, "Repetitions (best is reported)")->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed, "Dropout seed for stst")->capture_default_str();
  bench_cmd->add_option("--out", ba.out, "JSON results");
  bench_cmd->add_option("--csv", ba.csv, "CSV table");

  MontageArgs ma;
  auto* montage_cmd = app.add_subcommand("montage", "Labelled image grid");
  montage_cmd->add_option("--rows", ma.rows, "Layout JSON")->required();
  montage_cmd->add_option("--out", ma.out, "Output image (.png or .ppm)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (workers_global < 0) throw Error(ErrorKind::Usage, "--threads must be >= 0");
    if (workers_global > 0) kernels::set_num_workers(workers_global);
    if (*patchify_cmd) return do_patchify(pa, out);
    if (*split_cmd) return do_split(sa, out);
    if (*normalize_cmd) return do_normalize(na, out);
    if (*train_cmd) return do_train(ta, out);
    if (*evaluate_cmd) return do_evaluate(ea, out);
    if (*bench_cmd) return do_bench(ba, out);
    if (*montage_cmd) return do_montage(ma, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"stst"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace stst
