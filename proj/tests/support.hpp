// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hand-rolled generators and a tiny property runner shared by the test binaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stst/image.hpp"
#include "stst/rng.hpp"
#include "stst/stain.hpp"

namespace testing {

using stst::Rng;

inline stst::RgbImage random_rgb(Rng& rng, std::size_t w, std::size_t h, int lo = 0, int hi = 255) {
  stst::RgbImage img(w, h);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(lo + static_cast<int>(rng.below(hi - lo + 1)));
  return img;
}

inline stst::RgbImage uniform_rgb(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  stst::RgbImage img(w, h);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    img.data()[3 * i] = r;
    img.data()[3 * i + 1] = g;
    img.data()[3 * i + 2] = b;
  }
  return img;
}

inline stst::StainVector unit(stst::StainVector v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

inline double angle_deg(const stst::StainVector& a, const stst::StainVector& b) {
  const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::acos(std::clamp(d, -1.0, 1.0)) * 180.0 / M_PI;
}

/// Random non-negative unit OD vector with every component at least `floor`.
inline stst::StainVector random_stain(Rng& rng, double floor = 0.05) {
  return unit({rng.uniform(floor, 1.0), rng.uniform(floor, 1.0), rng.uniform(floor, 1.0)});
}

/// Two stains separated by at least `min_angle` degrees, labelled H/E by the red-component rule.
inline stst::StainMatrix random_he_pair(Rng& rng, double min_angle = 20.0) {
  for (;;) {
    const auto a = random_stain(rng), b = random_stain(rng);
    if (angle_deg(a, b) < min_angle) continue;
    const bool a_is_h = a[0] > b[0] || (a[0] == b[0] && a[1] >= b[1]);
    return a_is_h ? stst::StainMatrix({a, b}, {stst::StainLabel::Hematoxylin, stst::StainLabel::Eosin})
                  : stst::StainMatrix({b, a}, {stst::StainLabel::Hematoxylin, stst::StainLabel::Eosin});
  }
}

/// H&E-like pair: the reference hematoxylin and eosin directions, each jittered by up to `jitter` per component.
inline stst::StainMatrix random_he_like(Rng& rng, double jitter = 0.1) {
  const auto ref = stst::ruifrok_he_matrix();
  std::vector<stst::StainVector> cols;
  for (std::size_t k = 0; k < 2; ++k) {
    stst::StainVector v = ref.column(k);
    for (double& x : v) x = std::max(0.01, x + rng.uniform(-jitter, jitter));
    cols.push_back(unit(v));
  }
  return stst::StainMatrix(cols, {stst::StainLabel::Hematoxylin, stst::StainLabel::Eosin});
}

/// Three well-conditioned stains (smallest pairwise angle >= min_angle, not near-coplanar).
inline stst::StainMatrix random_three_stains(Rng& rng, double min_angle = 20.0) {
  for (;;) {
    const auto a = random_stain(rng, 0.0), b = random_stain(rng, 0.0), c = random_stain(rng, 0.0);
    if (angle_deg(a, b) < min_angle || angle_deg(a, c) < min_angle || angle_deg(b, c) < min_angle) continue;
    const double det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
                       a[2] * (b[0] * c[1] - b[1] * c[0]);
    if (std::abs(det) < 0.05) continue;
    return stst::StainMatrix({a, b, c}, {stst::StainLabel::Hematoxylin, stst::StainLabel::Eosin,
                                         stst::StainLabel::Background});
  }
}

/// OD image stains * C, written directly (no quantisation).
inline stst::PlanarImage render_od(const stst::StainMatrix& m, const stst::ConcentrationMap& c) {
  stst::PlanarImage od(3, c.width, c.height, stst::ColorSpace::OpticalDensity);
  for (std::size_t i = 0; i < c.pixels(); ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double s = 0.0;
      for (std::size_t k = 0; k < m.stains(); ++k) s += m.column(k)[ch] * c.data[k * c.pixels() + i];
      od.data()[ch * c.pixels() + i] = s;
    }
  }
  return od;
}

inline stst::ConcentrationMap random_concentrations(Rng& rng, std::size_t k, std::size_t w, std::size_t h,
                                                    double hi = 1.5) {
  stst::ConcentrationMap c{k, w, h, std::vector<double>(k * w * h)};
  for (auto& v : c.data) v = rng.uniform(0.0, hi);
  return c;
}

/// Two-stain tissue patch with white background and optional OD noise, quantised to 8 bits.
inline stst::RgbImage render_two_stain(Rng& rng, const stst::StainMatrix& m, std::size_t w, std::size_t h,
                                       double noise = 0.0, double background = 0.2) {
  stst::RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::array<double, 3> od{};
      if (!rng.bernoulli(background)) {
        const double c0 = rng.uniform(0.0, 1.2), c1 = rng.uniform(0.0, 1.2);
        for (std::size_t ch = 0; ch < 3; ++ch) od[ch] = m.column(0)[ch] * c0 + m.column(1)[ch] * c1;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = std::max(0.0, od[ch] + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0));
        img.at(x, y, ch) = stst::round_to_u8(255.0 * std::pow(10.0, -v));
      }
    }
  }
  return img;
}

/// H&E-like patch: hematoxylin nuclei blobs over an eosin field.
inline stst::RgbImage synthetic_tissue(std::uint64_t seed, std::size_t w = 32, std::size_t h = 32) {
  Rng r(seed);
  stst::RgbImage img(w, h);
  std::array<double, 4> cx{}, cy{}, rad{};
  for (int i = 0; i < 4; ++i) {
    cx[i] = r.uniform(4.0, static_cast<double>(w) - 4.0);
    cy[i] = r.uniform(4.0, static_cast<double>(h) - 4.0);
    rad[i] = r.uniform(3.0, 7.0);
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double hem = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double d = std::hypot(static_cast<double>(x) - cx[i], static_cast<double>(y) - cy[i]);
        if (d < rad[i]) hem = std::max(hem, 1.0 - d / rad[i]);
      }
      const double eos = 0.3 + 0.2 * std::sin(static_cast<double>(x) * 0.3 + static_cast<double>(seed)) *
                                   std::cos(static_cast<double>(y) * 0.2);
      const std::array<double, 3> od{0.78 * hem + 0.07 * eos, 0.84 * hem + 0.99 * eos, 0.348 * hem + 0.11 * eos};
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = stst::round_to_u8(255.0 * std::pow(10.0, -od[c]));
    }
  }
  return img;
}

/// Runs `trials` cases with per-trial seeds; returns the first failing trial index or -1.
inline int for_all(std::uint64_t seed, int trials, const std::function<bool(Rng&, int)>& property) {
  for (int t = 0; t < trials; ++t) {
    Rng rng(stst::derive_seed(seed, static_cast<std::uint64_t>(t)));
    if (!property(rng, t)) return t;
  }
  return -1;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("stst_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
