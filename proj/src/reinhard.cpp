// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "stst/error.hpp"
#include "stst/normalizers.hpp"

namespace stst {

ChannelStats channel_stats(const PlanarImage& img) {
  if (img.channels() != 3) throw Error(ErrorKind::DimensionMismatch, "channel_stats expects 3 channels");
  ChannelStats s;
  const double n = static_cast<double>(img.plane_size());
  for (std::size_t c = 0; c < 3; ++c) {
    auto p = img.plane(c);
    double sum = 0.0;
    for (double v : p) sum += v;
    const double mean = sum / n;
    double sq = 0.0;
    for (double v : p) sq += (v - mean) * (v - mean);
    s.mean[c] = mean;
    s.std[c] = std::sqrt(sq / n);
  }
  return s;
}

namespace {

double floored_std(double s, double floor, std::size_t channel) {
  if (floor > 0.0) return std::max(s, floor);
  if (!(s > 0.0)) {
    throw Error(ErrorKind::DegenerateImage, "lαβ channel " + std::to_string(channel) + " is constant");
  }
  return s;
}

}  // namespace

ReinhardState reinhard_fit(const RgbImage& reference, double std_floor) {
  const auto stats = channel_stats(rgb_to_lalphabeta(reference));
  ReinhardState state;
  for (std::size_t c = 0; c < 3; ++c) {
    state.ref_mean[c] = stats.mean[c];
    state.ref_std[c] = floored_std(stats.std[c], std_floor, c);
  }
  return state;
}

PlanarImage reinhard_transform_lab(const RgbImage& source, const ReinhardState& state, double std_floor) {
  PlanarImage lab = rgb_to_lalphabeta(source);
  const auto stats = channel_stats(lab);
  for (std::size_t c = 0; c < 3; ++c) {
    const double scale = state.ref_std[c] / floored_std(stats.std[c], std_floor, c);
    const double mu_src = stats.mean[c];
    const double mu_ref = state.ref_mean[c];
    for (double& v : lab.plane(c)) v = (v - mu_src) * scale + mu_ref;
  }
  return lab;
}

RgbImage reinhard_transform(const RgbImage& source, const ReinhardState& state, double std_floor) {
  return lalphabeta_to_rgb(reinhard_transform_lab(source, state, std_floor));
}

}  // namespace stst
