// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stst/normalizers.hpp"

namespace stst::detail {

/// Clamps, normalises and labels two stain directions, Hematoxylin first.
StainMatrix ordered_he_matrix(const StainVector& a, const StainVector& b);

/// 99th-percentile concentration per stain.
std::vector<double> max_concentrations(const ConcentrationMap& conc);

StainNormalizerState make_state(const PlanarImage& od, StainMatrix stains);

/// Deconvolve with the source's own stains, rescale each stain to the
/// reference's 99th percentile and remix with the reference stains.
RgbImage transfer_stains(const PlanarImage& od, const StainMatrix& source_stains, const StainNormalizerState& state,
                         double i0);

}  // namespace stst::detail
