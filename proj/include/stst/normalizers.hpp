// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stst/image.hpp"
#include "stst/stain.hpp"

namespace stst {

// ---------------------------------------------------------------------------
// Reinhard: per-channel statistics matching in lαβ space.
// ---------------------------------------------------------------------------

inline constexpr double kReinhardStdFloor = 1e-6;

struct ReinhardState {
  std::array<double, 3> ref_mean{};
  std::array<double, 3> ref_std{};
};

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
};

/// Population mean/std of each channel of a 3-channel planar image.
ChannelStats channel_stats(const PlanarImage& img);

/// `std_floor <= 0` disables the floor; constant channels then raise DegenerateImage.
ReinhardState reinhard_fit(const RgbImage& reference, double std_floor = kReinhardStdFloor);
/// Matched lαβ planes before conversion back to RGB.
PlanarImage reinhard_transform_lab(const RgbImage& source, const ReinhardState& state,
                                   double std_floor = kReinhardStdFloor);
RgbImage reinhard_transform(const RgbImage& source, const ReinhardState& state, double std_floor = kReinhardStdFloor);

// ---------------------------------------------------------------------------
// Shared stain-normaliser state (Macenko, Vahadane).
// ---------------------------------------------------------------------------

struct StainNormalizerState {
  StainMatrix ref_stains;
  std::vector<double> ref_max_conc;
};

inline constexpr double kMaxConcPercentile = 99.0;

/// Nearest-rank percentile of unsorted values (p in [0,100]).
double percentile_nearest_rank(std::vector<double> values, double p);

/// Larger red OD component is Hematoxylin; ties broken by the larger green component.
std::array<StainLabel, 2> assign_he_labels(const StainVector& a, const StainVector& b);

// ---------------------------------------------------------------------------
// Macenko
// ---------------------------------------------------------------------------

struct MacenkoParams {
  double alpha = 1.0;   // angle percentile
  double beta = 0.15;   // OD threshold
  double i0 = kDefaultI0;
};

inline constexpr std::size_t kMinTissuePixels = 10;

StainMatrix macenko_estimate_stains(const RgbImage& img, const MacenkoParams& params = {});
/// Same estimate on an OD image directly.
StainMatrix macenko_estimate_stains_od(const PlanarImage& od, const MacenkoParams& params = {});

StainNormalizerState macenko_fit(const RgbImage& reference, const MacenkoParams& params = {});
RgbImage macenko_normalize(const RgbImage& source, const StainNormalizerState& state,
                           const MacenkoParams& params = {});

// ---------------------------------------------------------------------------
// Sparse NMF (Vahadane)
// ---------------------------------------------------------------------------

struct SnmfConfig {
  double sparsity_lambda = 0.1;
  int max_iterations = 200;
  double tolerance = 1e-6;
  double tissue_od_threshold = 0.15;
  std::uint64_t seed = 0;
  double init_jitter = 0.0;  // uniform +/- jitter added to the warm start before renormalisation

  void validate() const;
};

struct SnmfResult {
  StainMatrix stains;
  ConcentrationMap concentrations;  // stains x rows, width = rows, height = 1
  std::vector<double> objective;    // value after every full alternation
  std::vector<double> max_norm_error;  // max |‖w_k‖ - 1| after every alternation
  int iterations = 0;
};

/// Factorises `od_rows` (row-major N x 3) as W * H with W: 3 x K, H: K x N.
SnmfResult snmf_factorize(std::span<const double> od_rows, std::size_t k, const SnmfConfig& config);
double snmf_objective(std::span<const double> od_rows, const StainMatrix& w, const ConcentrationMap& h, double lambda);

/// Rows (N x 3) of pixels whose max-channel OD reaches the threshold.
std::vector<double> tissue_od_rows(const PlanarImage& od, double threshold);

StainNormalizerState vahadane_fit(const RgbImage& reference, const SnmfConfig& config = {}, double i0 = kDefaultI0);
RgbImage vahadane_normalize(const RgbImage& source, const StainNormalizerState& state, const SnmfConfig& config = {},
                            double i0 = kDefaultI0);

}  // namespace stst
