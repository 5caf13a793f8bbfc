// SPDX-License-Identifier: Apache-2.0
#include "stst/stain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "stst/error.hpp"
#include "stst/kernels.hpp"

namespace stst {

std::string_view to_string(StainLabel label) {
  switch (label) {
    case StainLabel::Hematoxylin: return "H";
    case StainLabel::Eosin: return "E";
    case StainLabel::Background: return "Bg";
  }
  return "?";
}

StainLabel stain_label_from_string(std::string_view name) {
  if (name == "H" || name == "Hematoxylin") return StainLabel::Hematoxylin;
  if (name == "E" || name == "Eosin") return StainLabel::Eosin;
  if (name == "Bg" || name == "Background") return StainLabel::Background;
  throw Error(ErrorKind::Format, "unknown stain label '" + std::string(name) + "'");
}

namespace {

double norm3(const StainVector& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

StainMatrix::StainMatrix(std::vector<StainVector> columns, std::vector<StainLabel> labels)
    : columns_(std::move(columns)), labels_(std::move(labels)) {
  if (columns_.empty() || columns_.size() > 3) throw Error(ErrorKind::Config, "stain matrix needs 1..3 columns");
  if (columns_.size() != labels_.size()) throw Error(ErrorKind::LabelMismatch, "one label per stain column required");
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    for (double v : columns_[k]) {
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::Config, "stain vector components must be finite and >= 0");
    }
    if (std::abs(norm3(columns_[k]) - 1.0) > kNormTolerance) {
      throw Error(ErrorKind::Config, "stain vector " + std::to_string(k) + " is not unit norm");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (labels_[j] == labels_[k]) throw Error(ErrorKind::LabelMismatch, "duplicate stain label");
    }
  }
}

StainMatrix StainMatrix::from_unnormalized(std::vector<StainVector> columns, std::vector<StainLabel> labels) {
  for (auto& c : columns) {
    for (double& v : c) v = std::max(v, 0.0);
    const double n = norm3(c);
    if (!(n > 0.0)) throw Error(ErrorKind::SingularStainMatrix, "zero stain vector");
    for (double& v : c) v /= n;
  }
  return StainMatrix(std::move(columns), std::move(labels));
}

std::optional<std::size_t> StainMatrix::index_of(StainLabel label) const {
  for (std::size_t k = 0; k < labels_.size(); ++k) {
    if (labels_[k] == label) return k;
  }
  return std::nullopt;
}

std::vector<double> StainMatrix::pseudo_inverse() const {
  const auto k = static_cast<Eigen::Index>(columns_.size());
  Eigen::MatrixXd s(3, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (int c = 0; c < 3; ++c) s(c, j) = columns_[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(k - 1) < kSingularTolerance * sv(0)) {
    throw Error(ErrorKind::SingularStainMatrix, "stain columns are linearly dependent");
  }
  const Eigen::MatrixXd pinv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  std::vector<double> out(static_cast<std::size_t>(k) * 3);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(r) * 3 + static_cast<std::size_t>(c)] = pinv(r, c);
  }
  return out;
}

ConcentrationMap deconvolve(const PlanarImage& od, const StainMatrix& stains) {
  if (od.space() != ColorSpace::OpticalDensity || od.channels() != 3) {
    throw Error(ErrorKind::DimensionMismatch, "deconvolve expects a 3-channel optical density image");
  }
  const auto pinv = stains.pseudo_inverse();
  ConcentrationMap conc{stains.stains(), od.width(), od.height(), {}};
  conc.data.assign(conc.stains * conc.pixels(), 0.0);
  if (kernels::num_workers() > 1) {
    kernels::project_clamped_parallel(pinv, conc.stains, od.data(), conc.pixels(), conc.data);
  } else {
    kernels::project_clamped_serial(pinv, conc.stains, od.data(), conc.pixels(), conc.data);
  }
  return conc;
}

PlanarImage reconstruct(const ConcentrationMap& conc, const StainMatrix& stains) {
  if (conc.stains != stains.stains()) {
    throw Error(ErrorKind::DimensionMismatch, "concentration map has " + std::to_string(conc.stains) +
                                                  " stains, matrix has " + std::to_string(stains.stains()));
  }
  if (conc.data.size() != conc.stains * conc.pixels()) {
    throw Error(ErrorKind::DimensionMismatch, "concentration buffer size inconsistent with dimensions");
  }
  PlanarImage od(3, conc.width, conc.height, ColorSpace::OpticalDensity);
  const std::size_t n = conc.pixels();
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = od.plane(c);
    for (std::size_t k = 0; k < conc.stains; ++k) {
      const double w = stains.column(k)[c];
      auto ck = conc.plane(k);
      for (std::size_t i = 0; i < n; ++i) plane[i] += w * ck[i];
    }
    for (std::size_t i = 0; i < n; ++i) plane[i] = std::max(plane[i], 0.0);
  }
  return od;
}

StainMatrix ruifrok_he_matrix() {
  StainVector h{0.650, 0.704, 0.286};
  StainVector e{0.072, 0.990, 0.105};
  auto unit = [](StainVector v) {
    const double n = norm3(v);
    for (double& x : v) x /= n;
    return v;
  };
  h = unit(h);
  e = unit(e);
  StainVector r{h[1] * e[2] - h[2] * e[1], h[2] * e[0] - h[0] * e[2], h[0] * e[1] - h[1] * e[0]};
  // The cross product has a negative component; flip to the non-negative octant where possible.
  for (double& x : r) x = std::abs(x);
  return StainMatrix({h, e, unit(r)}, {StainLabel::Hematoxylin, StainLabel::Eosin, StainLabel::Background});
}

ConcentrationMap ruifrok_deconvolve(const RgbImage& img, const StainMatrix& reference, double i0) {
  return deconvolve(rgb_to_od(img, i0), reference);
}

std::array<double, 3> stain_rgb(const StainVector& v, double i0) {
  return {i0 * std::pow(10.0, -v[0]), i0 * std::pow(10.0, -v[1]), i0 * std::pow(10.0, -v[2])};
}

double rgb_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double d0 = a[0] - b[0];
  const double d1 = a[1] - b[1];
  const double d2 = a[2] - b[2];
  return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

std::map<StainLabel, std::optional<double>> stain_vector_distance(const StainMatrix& estimated,
                                                                  const StainMatrix& reference, DistanceSpace space,
                                                                  double i0) {
  std::map<StainLabel, std::optional<double>> out;
  bool any = false;
  for (StainLabel label : {StainLabel::Hematoxylin, StainLabel::Eosin, StainLabel::Background}) {
    const auto ie = estimated.index_of(label);
    const auto ir = reference.index_of(label);
    if (ie && ir) {
      const auto& a = estimated.column(*ie);
      const auto& b = reference.column(*ir);
      out[label] = space == DistanceSpace::RenderedRgb ? rgb_distance(stain_rgb(a, i0), stain_rgb(b, i0))
                                                       : rgb_distance(a, b);
      any = true;
    } else {
      out[label] = std::nullopt;
    }
  }
  if (!any) throw Error(ErrorKind::LabelMismatch, "estimated and reference matrices share no stain labels");
  return out;
}

StainMatrix estimate_stain_appearance(const RgbImage& img, double tissue_threshold, double i0) {
  const PlanarImage od = rgb_to_od(img, i0);
  const auto ref = ruifrok_he_matrix();
  const ConcentrationMap conc = deconvolve(od, ref);
  const auto ih = *ref.index_of(StainLabel::Hematoxylin);
  const auto ie = *ref.index_of(StainLabel::Eosin);

  std::array<StainVector, 3> sums{};
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < od.plane_size(); ++i) {
    const StainVector v{od.plane(0)[i], od.plane(1)[i], od.plane(2)[i]};
    const bool tissue = std::max({v[0], v[1], v[2]}) >= tissue_threshold;
    std::size_t slot;
    if (tissue) {
      slot = conc.plane(ih)[i] >= conc.plane(ie)[i] ? 0 : 1;
    } else {
      if (norm3(v) <= 0.0) continue;
      slot = 2;
    }
    for (int c = 0; c < 3; ++c) sums[slot][static_cast<std::size_t>(c)] += v[static_cast<std::size_t>(c)];
    ++counts[slot];
  }
  const StainLabel labels[3] = {StainLabel::Hematoxylin, StainLabel::Eosin, StainLabel::Background};
  std::vector<StainVector> cols;
  std::vector<StainLabel> out_labels;
  for (std::size_t s = 0; s < 3; ++s) {
    if (counts[s] == 0 || norm3(sums[s]) <= 1e-12) continue;
    cols.push_back(sums[s]);
    out_labels.push_back(labels[s]);
  }
  if (cols.empty()) throw Error(ErrorKind::InsufficientTissue, "image has no stained or background pixels");
  return StainMatrix::from_unnormalized(std::move(cols), std::move(out_labels));
}

}  // namespace stst
