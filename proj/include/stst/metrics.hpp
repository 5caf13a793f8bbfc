// SPDX-License-Identifier: Apache-2.0
#pragma once

// Full-reference image quality metrics and mean/std report aggregation.
// Directional metrics (psnr, ergas, rase) treat `y` as the reference.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stst/image.hpp"

namespace stst {

struct MetricConfig {
  double dynamic_range = 255.0;
  std::size_t ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  std::array<double, 5> msssim_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  std::size_t uqi_window = 8;
  double ergas_ratio = 1.0;

  void validate() const;
};

/// Smallest image side any windowed metric accepts.
inline constexpr std::size_t kMinMetricSide = 8;

struct PixelErrors {
  double mse = 0.0;
  double rmse = 0.0;
  double psnr = 0.0;  // +inf when mse == 0
};

PixelErrors pixel_error_metrics(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg = {});

/// Gaussian weights (odd side, sum 1) used by ssim.
std::vector<double> gaussian_window(std::size_t side, double sigma);
/// Window side used for an image whose smaller side is `min_side`: cfg.ssim_window,
/// shrunk to the largest odd value that fits.
std::size_t effective_ssim_window(std::size_t min_side, const MetricConfig& cfg);

/// Means over all windows of the luminance, contrast and structure factors (C3 = C2/2).
struct SsimTerms {
  double luminance = 0.0;
  double contrast = 0.0;
  double structure = 0.0;
};

/// Single-plane variants (channel 0 of each input).
double ssim(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg = {});
SsimTerms ssim_terms(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg = {});
/// Scale count is reduced (weights renormalised) until the coarsest scale still fits a window.
double ms_ssim(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg = {}, int* scales_used = nullptr);
double uqi(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg = {});
/// Number of MS-SSIM scales used for an image of this size.
int msssim_scale_count(std::size_t width, std::size_t height, const MetricConfig& cfg = {});

struct SsimFamily {
  double ssim = 0.0;
  double ms_ssim = 0.0;
  double uqi = 0.0;
  int ms_ssim_scales = 0;
};

/// Computed on the luminance plane.
SsimFamily ssim_family(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg = {});

/// Pearson correlation. One constant side -> 0; both constant -> ConstantInput.
double pearson(std::span<const double> a, std::span<const double> b);
/// 3x3 Laplacian high-pass of every channel, reflect-101 borders.
PlanarImage highpass(const RgbImage& img);

struct Correlations {
  double pcc = 0.0;
  double scc = 0.0;
};

Correlations correlation_metrics(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg = {});
double pcc(const RgbImage& x, const RgbImage& y);
double scc(const RgbImage& x, const RgbImage& y);

struct Spectral {
  double ergas = 0.0;
  double rase = 0.0;
};

Spectral spectral_metrics(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg = {});

// ---- reports -------------------------------------------------------------

enum class Metric { SSIM, MSSSIM, SCC, PCC, MSE, RMSE, PSNR, ERGAS, RASE, UQI };
inline constexpr std::size_t kMetricCount = 10;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics{Metric::SSIM, Metric::MSSSIM, Metric::SCC,  Metric::PCC,
                                                              Metric::MSE,  Metric::RMSE,   Metric::PSNR, Metric::ERGAS,
                                                              Metric::RASE, Metric::UQI};
std::string_view to_string(Metric m);

/// One value per metric; nullopt marks an undefined value (e.g. correlation of constant images).
struct PatchMetrics {
  std::string id;
  std::array<std::optional<double>, kMetricCount> values{};

  std::optional<double> operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
};

PatchMetrics evaluate_pair(const RgbImage& predicted, const RgbImage& truth, const MetricConfig& cfg = {});

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population (n divisor)
  std::size_t count = 0;
  std::size_t excluded = 0;  // infinite or undefined values left out
};

/// Aggregates the finite values.
Aggregate aggregate(std::span<const std::optional<double>> values);

struct MetricReport {
  std::string method;
  MetricConfig config;
  std::vector<PatchMetrics> patches;
  std::array<Aggregate, kMetricCount> aggregates{};
  std::string manifest_hash;

  const Aggregate& operator[](Metric m) const { return aggregates[static_cast<std::size_t>(m)]; }
};

using ImagePair = std::pair<RgbImage, RgbImage>;  // (predicted, truth)

/// Evaluates every pair in order; errors are rethrown with the pair index.
MetricReport aggregate_report(std::span<const ImagePair> pairs, const MetricConfig& cfg = {},
                              std::span<const std::string> ids = {});
/// Recomputes aggregates from the per-patch values.
void recompute_aggregates(MetricReport& report);

nlohmann::json to_json(const MetricConfig& cfg);
nlohmann::json to_json(const MetricReport& report);
/// Metrics as rows, methods as columns, "mean ± std" cells.
std::string table_csv(std::span<const MetricReport> reports);

}  // namespace stst
