// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stst {

/// 8-bit interleaved RGB raster, row-major.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(std::size_t width, std::size_t height, std::uint8_t fill = 0);
  RgbImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> data);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return data_[(y * width_ + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return data_[(y * width_ + x) * 3 + c]; }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class ColorSpace { Grayscale, OpticalDensity, LAlphaBeta, Normalized, Rgb };

/// Channel-major floating-point raster.
class PlanarImage {
 public:
  PlanarImage() = default;
  PlanarImage(std::size_t channels, std::size_t width, std::size_t height, ColorSpace space, double fill = 0.0);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t plane_size() const noexcept { return width_ * height_; }
  ColorSpace space() const noexcept { return space_; }

  double& at(std::size_t c, std::size_t x, std::size_t y) { return data_[c * plane_size() + y * width_ + x]; }
  double at(std::size_t c, std::size_t x, std::size_t y) const { return data_[c * plane_size() + y * width_ + x]; }

  std::span<double> plane(std::size_t c) { return std::span<double>(data_).subspan(c * plane_size(), plane_size()); }
  std::span<const double> plane(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const PlanarImage&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  ColorSpace space_ = ColorSpace::Grayscale;
  std::vector<double> data_;
};

// BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;
inline constexpr double kDefaultI0 = 255.0;

/// Nearest integer with ties away from zero, clamped to [0, 255].
std::uint8_t round_to_u8(double v) noexcept;

double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;
PlanarImage to_grayscale(const RgbImage& img);

PlanarImage rgb_to_od(const RgbImage& img, double i0 = kDefaultI0);
RgbImage od_to_rgb(const PlanarImage& od, double i0 = kDefaultI0);

PlanarImage rgb_to_lalphabeta(const RgbImage& img);
RgbImage lalphabeta_to_rgb(const PlanarImage& lab);

/// Grayscale plane in [0,255] mapped to [-1,1] via v/127.5 - 1.
PlanarImage normalize_unit(const PlanarImage& img);
PlanarImage normalize_unit(const RgbImage& img);
/// Inverse of normalize_unit for a 3-channel plane: round((v+1)*127.5), clamped.
RgbImage denormalize_rgb(const PlanarImage& img);

/// Copy of a rectangular region.
RgbImage crop(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

}  // namespace stst
