// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "stst/image.hpp"

namespace stst {

enum class StainLabel { Hematoxylin, Eosin, Background };

std::string_view to_string(StainLabel label);
StainLabel stain_label_from_string(std::string_view name);

using StainVector = std::array<double, 3>;

/// Unit-norm, non-negative OD stain vectors stored as labelled columns.
class StainMatrix {
 public:
  static constexpr double kNormTolerance = 1e-9;
  static constexpr double kSingularTolerance = 1e-8;

  StainMatrix() = default;
  /// Validates unit norm and non-negativity; does not check independence.
  StainMatrix(std::vector<StainVector> columns, std::vector<StainLabel> labels);

  /// Normalises each column to unit length (clamping negatives to 0 first).
  static StainMatrix from_unnormalized(std::vector<StainVector> columns, std::vector<StainLabel> labels);

  std::size_t stains() const noexcept { return columns_.size(); }
  const StainVector& column(std::size_t k) const { return columns_.at(k); }
  StainLabel label(std::size_t k) const { return labels_.at(k); }
  const std::vector<StainVector>& columns() const noexcept { return columns_; }
  const std::vector<StainLabel>& labels() const noexcept { return labels_; }
  std::optional<std::size_t> index_of(StainLabel label) const;

  /// K x 3 row-major pseudo-inverse; throws SingularStainMatrix on dependent columns.
  std::vector<double> pseudo_inverse() const;

  bool operator==(const StainMatrix&) const = default;

 private:
  std::vector<StainVector> columns_;
  std::vector<StainLabel> labels_;
};

/// Per-stain, per-pixel concentrations, stain-major.
struct ConcentrationMap {
  std::size_t stains = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  std::size_t pixels() const noexcept { return width * height; }
  std::span<double> plane(std::size_t k) { return std::span<double>(data).subspan(k * pixels(), pixels()); }
  std::span<const double> plane(std::size_t k) const {
    return std::span<const double>(data).subspan(k * pixels(), pixels());
  }
};

/// Least-squares unmixing via the pseudo-inverse; negative coefficients clamped to 0.
ConcentrationMap deconvolve(const PlanarImage& od, const StainMatrix& stains);
/// Forward Beer-Lambert mixing.
PlanarImage reconstruct(const ConcentrationMap& conc, const StainMatrix& stains);

/// Standard Ruifrok H&E vectors with the normalised H x E residual.
StainMatrix ruifrok_he_matrix();
ConcentrationMap ruifrok_deconvolve(const RgbImage& img, const StainMatrix& reference = ruifrok_he_matrix(),
                                    double i0 = kDefaultI0);

/// Colour of a unit OD vector at unit concentration: i0 * 10^-v per channel.
std::array<double, 3> stain_rgb(const StainVector& v, double i0 = kDefaultI0);
double rgb_distance(const std::array<double, 3>& a, const std::array<double, 3>& b);

enum class DistanceSpace { RenderedRgb, OpticalDensity };

/// Per-label distance for labels present in both matrices; absent labels map to nullopt.
std::map<StainLabel, std::optional<double>> stain_vector_distance(const StainMatrix& estimated,
                                                                  const StainMatrix& reference,
                                                                  DistanceSpace space = DistanceSpace::RenderedRgb,
                                                                  double i0 = kDefaultI0);

/// Per-image H/E/background appearance: mean OD direction of the pixels each
/// Ruifrok stain dominates, plus the mean OD direction of non-tissue pixels.
/// Labels with no supporting pixels are omitted.
StainMatrix estimate_stain_appearance(const RgbImage& img, double tissue_threshold = 0.15, double i0 = kDefaultI0);

}  // namespace stst
