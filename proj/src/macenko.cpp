// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "stain_common.hpp"
#include "stst/error.hpp"
#include "stst/normalizers.hpp"

namespace stst {

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorKind::DimensionMismatch, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

std::array<StainLabel, 2> assign_he_labels(const StainVector& a, const StainVector& b) {
  const bool a_is_h = a[0] > b[0] || (a[0] == b[0] && a[1] >= b[1]);
  return a_is_h ? std::array{StainLabel::Hematoxylin, StainLabel::Eosin}
                : std::array{StainLabel::Eosin, StainLabel::Hematoxylin};
}

namespace detail {

StainMatrix ordered_he_matrix(const StainVector& a, const StainVector& b) {
  const auto labels = assign_he_labels(a, b);
  if (labels[0] == StainLabel::Hematoxylin) {
    return StainMatrix::from_unnormalized({a, b}, {StainLabel::Hematoxylin, StainLabel::Eosin});
  }
  return StainMatrix::from_unnormalized({b, a}, {StainLabel::Hematoxylin, StainLabel::Eosin});
}

std::vector<double> max_concentrations(const ConcentrationMap& conc) {
  std::vector<double> out(conc.stains);
  for (std::size_t k = 0; k < conc.stains; ++k) {
    auto p = conc.plane(k);
    out[k] = percentile_nearest_rank(std::vector<double>(p.begin(), p.end()), kMaxConcPercentile);
  }
  return out;
}

StainNormalizerState make_state(const PlanarImage& od, StainMatrix stains) {
  const auto conc = deconvolve(od, stains);
  auto max_conc = max_concentrations(conc);
  for (double v : max_conc) {
    if (!(v > 0.0)) {
      throw Error(ErrorKind::InsufficientTissue, "reference 99th-percentile concentration is zero");
    }
  }
  return StainNormalizerState{std::move(stains), std::move(max_conc)};
}

RgbImage transfer_stains(const PlanarImage& od, const StainMatrix& source_stains, const StainNormalizerState& state,
                         double i0) {
  ConcentrationMap conc = deconvolve(od, source_stains);
  const auto src_max = max_concentrations(conc);
  ConcentrationMap mapped{state.ref_stains.stains(), conc.width, conc.height, {}};
  mapped.data.assign(mapped.stains * mapped.pixels(), 0.0);
  for (std::size_t k = 0; k < source_stains.stains(); ++k) {
    const auto target = state.ref_stains.index_of(source_stains.label(k));
    if (!target) continue;
    const double scale = src_max[k] > 0.0 ? state.ref_max_conc[*target] / src_max[k] : 1.0;
    auto from = conc.plane(k);
    auto to = mapped.plane(*target);
    for (std::size_t i = 0; i < from.size(); ++i) to[i] = from[i] * scale;
  }
  return od_to_rgb(reconstruct(mapped, state.ref_stains), i0);
}

}  // namespace detail

StainMatrix macenko_estimate_stains_od(const PlanarImage& od, const MacenkoParams& params) {
  if (od.space() != ColorSpace::OpticalDensity || od.channels() != 3) {
    throw Error(ErrorKind::DimensionMismatch, "Macenko estimation expects a 3-channel OD image");
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < od.plane_size(); ++i) {
    if (std::max({od.plane(0)[i], od.plane(1)[i], od.plane(2)[i]}) >= params.beta) keep.push_back(i);
  }
  if (keep.size() < kMinTissuePixels) {
    throw Error(ErrorKind::InsufficientTissue, std::to_string(keep.size()) + " pixels above OD threshold, need " +
                                                   std::to_string(kMinTissuePixels));
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = od.plane(c)[keep[r]];
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(1) < 1e-12 * sv(0)) {
    throw Error(ErrorKind::DegenerateRank, "OD cloud is rank one; a second stain cannot be separated");
  }
  Eigen::Vector3d e1 = svd.matrixV().col(0);
  Eigen::Vector3d e2 = svd.matrixV().col(1);
  if (e1.sum() < 0) e1 = -e1;
  if (e2.sum() < 0) e2 = -e2;

  std::vector<double> angles(keep.size());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const Eigen::Vector3d t = rows.row(r).transpose();
    angles[static_cast<std::size_t>(r)] = std::atan2(t.dot(e2), t.dot(e1));
  }
  const double lo = percentile_nearest_rank(angles, params.alpha);
  const double hi = percentile_nearest_rank(std::move(angles), 100.0 - params.alpha);
  const Eigen::Vector3d v1 = std::cos(lo) * e1 + std::sin(lo) * e2;
  const Eigen::Vector3d v2 = std::cos(hi) * e1 + std::sin(hi) * e2;
  return detail::ordered_he_matrix({v1[0], v1[1], v1[2]}, {v2[0], v2[1], v2[2]});
}

StainMatrix macenko_estimate_stains(const RgbImage& img, const MacenkoParams& params) {
  return macenko_estimate_stains_od(rgb_to_od(img, params.i0), params);
}

StainNormalizerState macenko_fit(const RgbImage& reference, const MacenkoParams& params) {
  const PlanarImage od = rgb_to_od(reference, params.i0);
  return detail::make_state(od, macenko_estimate_stains_od(od, params));
}

RgbImage macenko_normalize(const RgbImage& source, const StainNormalizerState& state, const MacenkoParams& params) {
  const PlanarImage od = rgb_to_od(source, params.i0);
  return detail::transfer_stains(od, macenko_estimate_stains_od(od, params), state, params.i0);
}

}  // namespace stst
