// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stst/config.hpp"
#include "stst/image.hpp"
#include "stst/metrics.hpp"
#include "stst/normalizers.hpp"
#include "stst/pix2pix.hpp"

namespace stst {

// ---- patches -------------------------------------------------------------

struct TileOrigin {
  std::size_t x = 0;
  std::size_t y = 0;

  bool operator==(const TileOrigin&) const = default;
};

/// Row-major grid of full size x size tiles from (0,0), truncated to max_per_frame.
std::vector<TileOrigin> tile_grid(std::size_t width, std::size_t height, std::size_t size, std::size_t max_per_frame);
/// Throws FrameTooSmall when either side is below `size`.
std::vector<RgbImage> patchify(const RgbImage& frame, std::size_t size = 256, std::size_t max_per_frame = 30);

enum class Role { Train, Test, Unassigned };
std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string frame_id;
  std::size_t patch_index = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  Role role = Role::Unassigned;
  std::string sha256;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::size_t patch_size = 0;
  std::optional<std::uint64_t> seed;
  std::vector<ManifestEntry> entries;

  std::size_t count(Role role) const;
  std::vector<ManifestEntry> subset(Role role) const;
  /// Unique paths.
  void validate() const;

  bool operator==(const DatasetManifest&) const = default;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Tiles every frame in `input_dir` (sorted by name) into `out_dir`; manifest paths are
/// stored relative to `manifest_dir`.
DatasetManifest patchify_frames(const std::filesystem::path& input_dir, const std::filesystem::path& out_dir,
                                std::size_t size, std::size_t per_frame, const std::filesystem::path& manifest_dir);

/// Seeded shuffle: first n_train -> train, next n_test -> test, rest unassigned. Entry order is kept.
DatasetManifest split_manifest(DatasetManifest manifest, std::size_t n_train, std::size_t n_test, std::uint64_t seed);

struct GrayRgbPair {
  PlanarImage gray;
  RgbImage rgb;
  std::string path;
};

/// Pairs in manifest order for the given role.
std::vector<GrayRgbPair> make_pairs(const DatasetManifest& manifest, Role role, const std::filesystem::path& base_dir);

// ---- normalisation -------------------------------------------------------

enum class Method { Reinhard, Macenko, Vahadane, Stst };
inline constexpr std::array<Method, 4> kAllMethods{Method::Reinhard, Method::Macenko, Method::Vahadane, Method::Stst};
std::string_view to_string(Method m);
Method method_from_string(std::string_view s);
/// True for the classical normalisers.
bool requires_reference(Method m);

struct NormalizerOptions {
  std::optional<RgbImage> reference;
  std::shared_ptr<const Generator> generator;
  std::uint64_t seed = 0;
  bool stst_dropout = true;
  MacenkoParams macenko;
  SnmfConfig snmf;
};

/// A fitted normaliser; apply() is safe to call concurrently.
class Normalizer {
 public:
  /// Throws Usage when a classical method has no reference, or stst is given one.
  static Normalizer create(Method method, const NormalizerOptions& options);

  Method method() const noexcept { return method_; }
  /// `index` selects the per-patch dropout seed for stst.
  RgbImage apply(const RgbImage& source, std::size_t index) const;

 private:
  Method method_ = Method::Reinhard;
  NormalizerOptions options_;
  ReinhardState reinhard_;
  StainNormalizerState stain_state_;
};

/// Data-parallel over patches with `workers` threads; output order follows input order.
std::vector<RgbImage> normalize_all(const Normalizer& normalizer, std::span<const RgbImage> sources, int workers);

// ---- training ------------------------------------------------------------

struct TrainSettings {
  TrainConfig train;
  GeneratorConfig generator = GeneratorConfig::desk();
  DiscriminatorConfig discriminator = DiscriminatorConfig::desk();
  std::uint64_t init_seed = 0;
};

TrainSettings train_settings_from_config(const KeyValueConfig& cfg);
KeyValueConfig to_config(const TrainSettings& s);

struct TrainRun {
  TrainResult result;
  std::filesystem::path best_checkpoint;
};

/// Trains on the manifest's train role; writes checkpoints, loss_log.csv and run.json into out_dir.
TrainRun run_training(const std::filesystem::path& manifest_path, const TrainSettings& settings,
                      const std::filesystem::path& out_dir);

// ---- evaluation ----------------------------------------------------------

struct StainSeparation {
  std::array<Aggregate, 3> per_label{};  // H, E, Bg
};

/// Rendered-RGB distances between the stain appearance of each prediction and its reference
/// (the truth patch's appearance unless `reference` is given).
StainSeparation stain_separation(std::span<const ImagePair> pairs, const std::optional<StainMatrix>& reference);

struct EvaluationReport {
  MetricReport metrics;
  StainSeparation separation;
  std::vector<std::string> files;
};

/// Matches files by name; every prediction needs a truth file.
EvaluationReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                                      const MetricConfig& cfg, const std::optional<StainMatrix>& reference,
                                      int workers);
nlohmann::json to_json(const EvaluationReport& r);

// ---- benchmark -----------------------------------------------------------

struct BenchResult {
  std::string method;
  std::size_t patch_count = 0;
  double total_seconds = 0.0;
  double per_patch_ms = 0.0;
  std::string machine;
  int repetitions = 0;
  bool failed = false;
  std::string error;
};

inline constexpr std::string_view kBenchPolicy =
    "setup (reference fit / checkpoint load) untimed; one warm-up patch untimed; best wall clock of N repetitions";

std::string machine_descriptor();

/// A method that throws is reported as failed; the others still run.
std::vector<BenchResult> run_bench(std::span<const Method> methods, std::span<const RgbImage> patches,
                                   const NormalizerOptions& options, int repetitions);
nlohmann::json to_json(std::span<const BenchResult> results);
std::string bench_table_csv(std::span<const BenchResult> results);

// ---- montage -------------------------------------------------------------

struct MontageCell {
  std::string label;
  RgbImage image;
};
using MontageRows = std::vector<std::vector<MontageCell>>;

inline constexpr std::size_t kMontageGutter = 4;     // px between columns
inline constexpr std::size_t kMontageLabelBand = 12;  // px above every row

/// Width: sum of cell widths + gutters; height: per row, label band + image height.
RgbImage render_montage(const MontageRows& rows);
void emit_montage(const MontageRows& rows, const std::filesystem::path& path);
/// {"rows": [[{"label": ..., "image": ...}, ...], ...]}; image paths relative to the spec file.
MontageRows load_montage_spec(const std::filesystem::path& path);

/// Pixel width of `text` in the built-in 5x7 font.
std::size_t text_width(std::string_view text);
void draw_text(RgbImage& img, std::size_t x, std::size_t y, std::string_view text, std::array<std::uint8_t, 3> color,
               std::size_t max_width);

}  // namespace stst
