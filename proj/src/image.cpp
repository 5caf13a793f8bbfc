// SPDX-License-Identifier: Apache-2.0
#include "stst/image.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "stst/error.hpp"

namespace stst {

RgbImage::RgbImage(std::size_t width, std::size_t height, std::uint8_t fill)
    : width_(width), height_(height), data_(width * height * 3, fill) {
  if (width == 0 || height == 0) throw Error(ErrorKind::DimensionMismatch, "image dimensions must be >= 1");
}

RgbImage::RgbImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width == 0 || height == 0) throw Error(ErrorKind::DimensionMismatch, "image dimensions must be >= 1");
  if (data_.size() != width * height * 3) {
    throw Error(ErrorKind::DimensionMismatch, "RGB buffer length does not equal width*height*3");
  }
}

PlanarImage::PlanarImage(std::size_t channels, std::size_t width, std::size_t height, ColorSpace space, double fill)
    : channels_(channels), width_(width), height_(height), space_(space), data_(channels * width * height, fill) {
  if (channels == 0 || width == 0 || height == 0) {
    throw Error(ErrorKind::DimensionMismatch, "planar image dimensions must be >= 1");
  }
}

std::uint8_t round_to_u8(double v) noexcept {
  const double r = std::round(v);  // ties away from zero
  if (!(r > 0.0)) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

PlanarImage to_grayscale(const RgbImage& img) {
  PlanarImage out(1, img.width(), img.height(), ColorSpace::Grayscale);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    dst[i] = luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
  }
  return out;
}

PlanarImage rgb_to_od(const RgbImage& img, double i0) {
  if (!(i0 > 0.0)) throw Error(ErrorKind::Config, "i0 must be positive");
  PlanarImage out(3, img.width(), img.height(), ColorSpace::OpticalDensity);
  // One log per possible sample value.
  double table[256];
  for (int v = 0; v < 256; ++v) {
    table[v] = std::max(0.0, -std::log10(std::max(static_cast<double>(v), 1.0) / i0));
  }
  auto src = img.data();
  const std::size_t n = img.pixel_count();
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) plane[i] = table[src[3 * i + c]];
  }
  return out;
}

RgbImage od_to_rgb(const PlanarImage& od, double i0) {
  if (od.space() != ColorSpace::OpticalDensity || od.channels() != 3) {
    throw Error(ErrorKind::DimensionMismatch, "od_to_rgb expects a 3-channel optical density image");
  }
  RgbImage out(od.width(), od.height());
  auto dst = out.data();
  const std::size_t n = od.plane_size();
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = od.plane(c);
    for (std::size_t i = 0; i < n; ++i) dst[3 * i + c] = round_to_u8(i0 * std::pow(10.0, -plane[i]));
  }
  return out;
}

namespace {

// log floor for the lαβ forward map; 1/255^2 keeps every 8-bit colour within one level on the round trip.
constexpr double kLmsFloor = 1.0 / (255.0 * 255.0);

struct LabMatrices {
  Eigen::Matrix3d rgb_to_lms;
  Eigen::Matrix3d lms_to_rgb;
  Eigen::Matrix3d log_lms_to_lab;
  Eigen::Matrix3d lab_to_log_lms;
};

const LabMatrices& lab_matrices() {
  static const LabMatrices m = [] {
    LabMatrices r;
    r.rgb_to_lms << 0.3811, 0.5783, 0.0402,
                    0.1967, 0.7244, 0.0782,
                    0.0241, 0.1288, 0.8444;
    // White maps to LMS = (1,1,1) so the achromatic axis is exact.
    for (int i = 0; i < 3; ++i) r.rgb_to_lms.row(i) /= r.rgb_to_lms.row(i).sum();
    r.lms_to_rgb = r.rgb_to_lms.inverse();
    const Eigen::Vector3d scale(1.0 / std::sqrt(3.0), 1.0 / std::sqrt(6.0), 1.0 / std::sqrt(2.0));
    Eigen::Matrix3d mix;
    mix << 1, 1, 1,
           1, 1, -2,
           1, -1, 0;
    r.log_lms_to_lab = scale.asDiagonal() * mix;
    Eigen::Matrix3d unmix;
    unmix << 1, 1, 1,
             1, 1, -1,
             1, -2, 0;
    r.lab_to_log_lms = unmix * Eigen::Vector3d(std::sqrt(3.0) / 3.0, std::sqrt(6.0) / 6.0, std::sqrt(2.0) / 2.0).asDiagonal();
    return r;
  }();
  return m;
}

}  // namespace

PlanarImage rgb_to_lalphabeta(const RgbImage& img) {
  const auto& m = lab_matrices();
  PlanarImage out(3, img.width(), img.height(), ColorSpace::LAlphaBeta);
  auto src = img.data();
  auto l = out.plane(0);
  auto a = out.plane(1);
  auto b = out.plane(2);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const Eigen::Vector3d rgb(src[3 * i] / 255.0, src[3 * i + 1] / 255.0, src[3 * i + 2] / 255.0);
    Eigen::Vector3d lms = m.rgb_to_lms * rgb;
    for (int k = 0; k < 3; ++k) lms[k] = std::log10(std::max(lms[k], kLmsFloor));
    const Eigen::Vector3d lab = m.log_lms_to_lab * lms;
    l[i] = lab[0];
    a[i] = lab[1];
    b[i] = lab[2];
  }
  return out;
}

RgbImage lalphabeta_to_rgb(const PlanarImage& lab) {
  if (lab.space() != ColorSpace::LAlphaBeta || lab.channels() != 3) {
    throw Error(ErrorKind::DimensionMismatch, "lalphabeta_to_rgb expects a 3-channel lαβ image");
  }
  const auto& m = lab_matrices();
  RgbImage out(lab.width(), lab.height());
  auto dst = out.data();
  auto l = lab.plane(0);
  auto a = lab.plane(1);
  auto b = lab.plane(2);
  for (std::size_t i = 0; i < lab.plane_size(); ++i) {
    Eigen::Vector3d log_lms = m.lab_to_log_lms * Eigen::Vector3d(l[i], a[i], b[i]);
    for (int k = 0; k < 3; ++k) log_lms[k] = std::pow(10.0, log_lms[k]);
    const Eigen::Vector3d rgb = m.lms_to_rgb * log_lms * 255.0;
    for (int k = 0; k < 3; ++k) dst[3 * i + k] = round_to_u8(rgb[k]);
  }
  return out;
}

PlanarImage normalize_unit(const PlanarImage& img) {
  PlanarImage out(img.channels(), img.width(), img.height(), ColorSpace::Normalized);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i] / 127.5 - 1.0, -1.0, 1.0);
  return out;
}

PlanarImage normalize_unit(const RgbImage& img) {
  PlanarImage out(3, img.width(), img.height(), ColorSpace::Normalized);
  auto src = img.data();
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = out.plane(c);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) plane[i] = src[3 * i + c] / 127.5 - 1.0;
  }
  return out;
}

RgbImage denormalize_rgb(const PlanarImage& img) {
  if (img.channels() != 3) throw Error(ErrorKind::DimensionMismatch, "denormalize_rgb expects 3 channels");
  RgbImage out(img.width(), img.height());
  auto dst = out.data();
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = img.plane(c);
    for (std::size_t i = 0; i < img.plane_size(); ++i) dst[3 * i + c] = round_to_u8((plane[i] + 1.0) * 127.5);
  }
  return out;
}

RgbImage crop(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > img.width() || y0 + h > img.height()) {
    throw Error(ErrorKind::DimensionMismatch, "crop region exceeds image bounds");
  }
  RgbImage out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = img.data().data() + ((y0 + y) * img.width() + x0) * 3;
    std::copy(row, row + w * 3, out.data().data() + y * w * 3);
  }
  return out;
}

}  // namespace stst
