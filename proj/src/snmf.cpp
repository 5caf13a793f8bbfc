// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "stain_common.hpp"
#include "stst/error.hpp"
#include "stst/normalizers.hpp"
#include "stst/rng.hpp"

namespace stst {

void SnmfConfig::validate() const {
  if (!(sparsity_lambda >= 0.0)) throw Error(ErrorKind::Config, "sparsity_lambda must be >= 0");
  if (max_iterations < 1) throw Error(ErrorKind::Config, "max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw Error(ErrorKind::Config, "tolerance must be > 0");
  if (!(init_jitter >= 0.0)) throw Error(ErrorKind::Config, "init_jitter must be >= 0");
}

namespace {

constexpr int kCoordinateSweeps = 10;
constexpr int kMaxBacktracks = 40;

// Sufficient statistics of H for the objective
//   ‖V‖² - 2 tr(Wᵀ V Hᵀ) + tr(WᵀW H Hᵀ) + λ Σ H
struct HStats {
  std::size_t k = 0;
  std::vector<double> hht;  // K x K
  std::vector<double> vht;  // 3 x K
  double h_sum = 0.0;
};

HStats h_stats(std::span<const double> v, const std::vector<double>& h, std::size_t k, std::size_t n) {
  HStats s{k, std::vector<double>(k * k, 0.0), std::vector<double>(3 * k, 0.0), 0.0};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < k; ++a) {
      const double ha = h[a * n + j];
      if (ha == 0.0) continue;
      s.h_sum += ha;
      for (std::size_t b = 0; b < k; ++b) s.hht[a * k + b] += ha * h[b * n + j];
      for (std::size_t c = 0; c < 3; ++c) s.vht[c * k + a] += v[j * 3 + c] * ha;
    }
  }
  return s;
}

using WMatrix = std::vector<StainVector>;  // K columns

double objective_from_stats(double v_norm2, const WMatrix& w, const HStats& s, double lambda) {
  const std::size_t k = s.k;
  double cross = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t c = 0; c < 3; ++c) cross += w[a][c] * s.vht[c * k + a];
  }
  double quad = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      const double g = w[a][0] * w[b][0] + w[a][1] * w[b][1] + w[a][2] * w[b][2];
      quad += g * s.hht[a * k + b];
    }
  }
  return std::max(0.0, v_norm2 - 2.0 * cross + quad) + lambda * s.h_sum;
}

// Non-negative lasso by cyclic coordinate descent, per pixel.
void update_h(std::span<const double> v, const WMatrix& w, double lambda, std::size_t n, std::vector<double>& h) {
  const std::size_t k = w.size();
  std::vector<double> gram(k * k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      gram[a * k + b] = w[a][0] * w[b][0] + w[a][1] * w[b][1] + w[a][2] * w[b][2];
    }
  }
  std::vector<double> wtv(k);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < k; ++a) {
      wtv[a] = w[a][0] * v[j * 3] + w[a][1] * v[j * 3 + 1] + w[a][2] * v[j * 3 + 2];
    }
    for (int sweep = 0; sweep < kCoordinateSweeps; ++sweep) {
      double change = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        double r = wtv[a] - 0.5 * lambda;
        for (std::size_t b = 0; b < k; ++b) {
          if (b != a) r -= gram[a * k + b] * h[b * n + j];
        }
        const double next = std::max(0.0, r / gram[a * k + a]);
        change = std::max(change, std::abs(next - h[a * n + j]));
        h[a * n + j] = next;
      }
      if (change < 1e-15) break;
    }
  }
}

WMatrix project_columns(WMatrix w) {
  for (auto& col : w) {
    for (double& x : col) x = std::max(x, 0.0);
    const double nrm = std::sqrt(col[0] * col[0] + col[1] * col[1] + col[2] * col[2]);
    if (!(nrm > 0.0)) return {};
    for (double& x : col) x /= nrm;
  }
  return w;
}

double max_norm_error(const WMatrix& w) {
  double e = 0.0;
  for (const auto& col : w) {
    e = std::max(e, std::abs(std::sqrt(col[0] * col[0] + col[1] * col[1] + col[2] * col[2]) - 1.0));
  }
  return e;
}

WMatrix initial_w(std::size_t k, const SnmfConfig& config) {
  const auto ruifrok = ruifrok_he_matrix();
  WMatrix w(ruifrok.columns().begin(), ruifrok.columns().begin() + static_cast<std::ptrdiff_t>(k));
  if (config.init_jitter > 0.0) {
    Rng rng(config.seed);
    for (auto& col : w) {
      for (double& x : col) x += rng.uniform(-config.init_jitter, config.init_jitter);
    }
  }
  auto projected = project_columns(w);
  if (projected.empty()) throw Error(ErrorKind::Config, "init_jitter collapsed a stain column");
  return projected;
}

}  // namespace

double snmf_objective(std::span<const double> od_rows, const StainMatrix& w, const ConcentrationMap& h,
                      double lambda) {
  const std::size_t n = od_rows.size() / 3;
  if (h.pixels() != n || h.stains != w.stains()) {
    throw Error(ErrorKind::DimensionMismatch, "factor shapes do not match the data");
  }
  double err = 0.0;
  double l1 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      double r = od_rows[j * 3 + c];
      for (std::size_t a = 0; a < w.stains(); ++a) r -= w.column(a)[c] * h.data[a * n + j];
      err += r * r;
    }
  }
  for (double x : h.data) l1 += std::abs(x);
  return err + lambda * l1;
}

SnmfResult snmf_factorize(std::span<const double> od_rows, std::size_t k, const SnmfConfig& config) {
  config.validate();
  if (k < 2 || k > 3) throw Error(ErrorKind::Config, "SNMF supports 2 or 3 stains");
  if (od_rows.size() % 3 != 0) throw Error(ErrorKind::DimensionMismatch, "OD rows must have 3 columns");
  const std::size_t n = od_rows.size() / 3;
  if (n < kMinTissuePixels) {
    throw Error(ErrorKind::InsufficientTissue,
                std::to_string(n) + " tissue rows, need " + std::to_string(kMinTissuePixels));
  }
  for (double x : od_rows) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorKind::Config, "OD rows must be finite and >= 0");
  }

  double v_norm2 = 0.0;
  for (double x : od_rows) v_norm2 += x * x;
  const double lambda = config.sparsity_lambda;

  WMatrix w = initial_w(k, config);
  std::vector<double> h(k * n, 0.0);
  HStats stats = h_stats(od_rows, h, k, n);
  double f = objective_from_stats(v_norm2, w, stats, lambda);

  SnmfResult result;
  double step = 0.0;
  for (int it = 0; it < config.max_iterations; ++it) {
    const double f_start = f;

    // H step. Exact coordinate minimisation cannot increase the objective;
    // keep the old H if rounding says otherwise.
    std::vector<double> h_prev = h;
    update_h(od_rows, w, lambda, n, h);
    HStats next_stats = h_stats(od_rows, h, k, n);
    const double f_h = objective_from_stats(v_norm2, w, next_stats, lambda);
    if (f_h <= f) {
      f = f_h;
      stats = std::move(next_stats);
    } else {
      h = std::move(h_prev);
    }

    // W step: projected gradient on the reconstruction term with backtracking.
    double lipschitz = 0.0;
    for (double x : stats.hht) lipschitz += x * x;
    lipschitz = 2.0 * std::sqrt(lipschitz);
    if (lipschitz > 0.0) {
      step = step > 0.0 ? 2.0 * step : 1.0 / lipschitz;
      WMatrix grad(k);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t c = 0; c < 3; ++c) {
          double g = -stats.vht[c * k + a];
          for (std::size_t b = 0; b < k; ++b) g += w[b][c] * stats.hht[b * k + a];
          grad[a][c] = 2.0 * g;
        }
      }
      bool accepted = false;
      for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
        WMatrix cand = w;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t c = 0; c < 3; ++c) cand[a][c] -= step * grad[a][c];
        }
        cand = project_columns(std::move(cand));
        if (cand.empty()) continue;
        const double f_w = objective_from_stats(v_norm2, cand, stats, lambda);
        if (f_w <= f) {
          w = std::move(cand);
          f = f_w;
          accepted = true;
          break;
        }
      }
      if (!accepted) step = 0.0;
    }

    result.objective.push_back(f);
    result.max_norm_error.push_back(max_norm_error(w));
    result.iterations = it + 1;
    if (f_start - f <= config.tolerance * std::max(f_start, 1e-300)) break;
  }

  // Final H against the final W, accepted only if it does not increase the objective.
  {
    std::vector<double> h_prev = h;
    update_h(od_rows, w, lambda, n, h);
    HStats next_stats = h_stats(od_rows, h, k, n);
    const double f_h = objective_from_stats(v_norm2, w, next_stats, lambda);
    if (f_h <= f) {
      f = f_h;
      result.objective.back() = f;
    } else {
      h = std::move(h_prev);
    }
  }

  // Label and order columns (Hematoxylin first for K = 2).
  std::vector<std::size_t> order(k);
  for (std::size_t a = 0; a < k; ++a) order[a] = a;
  std::vector<StainLabel> labels;
  if (k == 2) {
    const auto he = assign_he_labels(w[0], w[1]);
    if (he[0] == StainLabel::Eosin) order = {1, 0};
    labels = {StainLabel::Hematoxylin, StainLabel::Eosin};
  } else {
    const auto he = assign_he_labels(w[0], w[1]);
    if (he[0] == StainLabel::Eosin) order = {1, 0, 2};
    labels = {StainLabel::Hematoxylin, StainLabel::Eosin, StainLabel::Background};
  }
  std::vector<StainVector> cols;
  ConcentrationMap conc{k, n, 1, std::vector<double>(k * n)};
  for (std::size_t a = 0; a < k; ++a) {
    cols.push_back(w[order[a]]);
    std::copy_n(h.begin() + static_cast<std::ptrdiff_t>(order[a] * n), n,
                conc.data.begin() + static_cast<std::ptrdiff_t>(a * n));
  }
  // Columns are already unit-norm to rounding; re-normalisation keeps the invariant exact.
  result.stains = StainMatrix::from_unnormalized(std::move(cols), std::move(labels));
  result.concentrations = std::move(conc);
  return result;
}

std::vector<double> tissue_od_rows(const PlanarImage& od, double threshold) {
  std::vector<double> rows;
  for (std::size_t i = 0; i < od.plane_size(); ++i) {
    const double r = od.plane(0)[i];
    const double g = od.plane(1)[i];
    const double b = od.plane(2)[i];
    if (std::max({r, g, b}) >= threshold) {
      rows.insert(rows.end(), {r, g, b});
    }
  }
  return rows;
}

StainNormalizerState vahadane_fit(const RgbImage& reference, const SnmfConfig& config, double i0) {
  const PlanarImage od = rgb_to_od(reference, i0);
  auto result = snmf_factorize(tissue_od_rows(od, config.tissue_od_threshold), 2, config);
  return detail::make_state(od, std::move(result.stains));
}

RgbImage vahadane_normalize(const RgbImage& source, const StainNormalizerState& state, const SnmfConfig& config,
                            double i0) {
  const PlanarImage od = rgb_to_od(source, i0);
  const auto result = snmf_factorize(tissue_od_rows(od, config.tissue_od_threshold), 2, config);
  return detail::transfer_stains(od, result.stains, state, i0);
}

}  // namespace stst
