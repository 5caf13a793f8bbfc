// SPDX-License-Identifier: Apache-2.0
#include "stst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stst/error.hpp"

namespace stst {

namespace {

void require_same_dims(std::size_t w1, std::size_t h1, std::size_t w2, std::size_t h2) {
  if (w1 != w2 || h1 != h2) {
    throw Error(ErrorKind::DimensionMismatch, "images differ in size: " + std::to_string(w1) + "x" + std::to_string(h1) +
                                                  " vs " + std::to_string(w2) + "x" + std::to_string(h2));
  }
}

void require_metric_size(std::size_t w, std::size_t h) {
  if (w < kMinMetricSide || h < kMinMetricSide) {
    throw Error(ErrorKind::TooSmall, "image " + std::to_string(w) + "x" + std::to_string(h) +
                                         " is below the 8x8 minimum for windowed metrics");
  }
}

void require_planes(const PlanarImage& x, const PlanarImage& y) {
  require_same_dims(x.width(), x.height(), y.width(), y.height());
  require_metric_size(x.width(), x.height());
}

// Row-major single plane.
struct Plane {
  std::size_t w = 0, h = 0;
  std::vector<double> v;

  double operator()(std::size_t x, std::size_t y) const { return v[y * w + x]; }
};

Plane plane_of(const PlanarImage& img) {
  Plane p{img.width(), img.height(), {}};
  const auto src = img.plane(0);
  p.v.assign(src.begin(), src.end());
  return p;
}

Plane multiply(const Plane& a, const Plane& b) {
  Plane out{a.w, a.h, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

// Valid-mode separable filtering with a 1-D kernel applied along both axes.
Plane filter_valid(const Plane& p, std::span<const double> k) {
  const std::size_t n = k.size();
  const std::size_t ow = p.w - n + 1, oh = p.h - n + 1;
  Plane rows{ow, p.h, std::vector<double>(ow * p.h)};
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * p(x + i, y);
      rows.v[y * ow + x] = s;
    }
  }
  Plane out{ow, oh, std::vector<double>(ow * oh)};
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows(x, y + i);
      out.v[y * ow + x] = s;
    }
  }
  return out;
}

std::vector<double> gaussian_1d(std::size_t side, double sigma) {
  std::vector<double> g(side);
  const double c = static_cast<double>(side / 2);
  for (std::size_t i = 0; i < side; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= s;
  return g;
}

// Per-window luminance and contrast-structure maps.
struct SsimMaps {
  std::vector<double> l, cs, c, s;
};

SsimMaps ssim_maps(const Plane& x, const Plane& y, std::size_t side, const MetricConfig& cfg) {
  const auto k = gaussian_1d(side, cfg.ssim_sigma);
  const Plane mx = filter_valid(x, k), my = filter_valid(y, k);
  const Plane xx = filter_valid(multiply(x, x), k), yy = filter_valid(multiply(y, y), k),
              xy = filter_valid(multiply(x, y), k);
  const double c1 = std::pow(cfg.ssim_k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.ssim_k2 * cfg.dynamic_range, 2);
  const double c3 = c2 / 2.0;
  SsimMaps m;
  const auto n = mx.v.size();
  m.l.resize(n);
  m.cs.resize(n);
  m.c.resize(n);
  m.s.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ux = mx.v[i], uy = my.v[i];
    const double vx = std::max(0.0, xx.v[i] - ux * ux), vy = std::max(0.0, yy.v[i] - uy * uy);
    const double cov = xy.v[i] - ux * uy;
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    m.l[i] = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
    m.cs[i] = (2.0 * cov + c2) / (vx + vy + c2);
    m.c[i] = (2.0 * sx * sy + c2) / (vx + vy + c2);
    m.s[i] = (cov + c3) / (sx * sy + c3);
  }
  return m;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Plane downsample(const Plane& p) {
  Plane out{p.w / 2, p.h / 2, {}};
  out.v.resize(out.w * out.h);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      out.v[y * out.w + x] =
          0.25 * (p(2 * x, 2 * y) + p(2 * x + 1, 2 * y) + p(2 * x, 2 * y + 1) + p(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

std::vector<double> flat(const RgbImage& img) {
  const auto d = img.data();
  return {d.begin(), d.end()};
}

}  // namespace

void MetricConfig::validate() const {
  if (!(dynamic_range > 0.0)) throw Error(ErrorKind::Config, "dynamic_range must be > 0");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw Error(ErrorKind::Config, "ssim_window must be odd");
  if (!(ssim_sigma > 0.0)) throw Error(ErrorKind::Config, "ssim_sigma must be > 0");
  if (!(ssim_k1 > 0.0) || !(ssim_k2 > 0.0)) throw Error(ErrorKind::Config, "ssim constants must be > 0");
  const double s = std::accumulate(msssim_weights.begin(), msssim_weights.end(), 0.0);
  // The published five-scale weights sum to 1.0001; they are renormalised when applied.
  if (std::abs(s - 1.0) > 1e-3) throw Error(ErrorKind::Config, "msssim_weights must sum to 1");
  for (double w : msssim_weights) {
    if (!(w > 0.0)) throw Error(ErrorKind::Config, "msssim_weights must be positive");
  }
  if (uqi_window < 1) throw Error(ErrorKind::Config, "uqi_window must be >= 1");
  if (!(ergas_ratio > 0.0)) throw Error(ErrorKind::Config, "ergas_ratio must be > 0");
}

PixelErrors pixel_error_metrics(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg) {
  require_same_dims(x.width(), x.height(), y.width(), y.height());
  const auto a = x.data(), b = y.data();
  if (a.empty()) throw Error(ErrorKind::TooSmall, "empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  PixelErrors e;
  e.mse = s / static_cast<double>(a.size());
  e.rmse = std::sqrt(e.mse);
  e.psnr = e.mse == 0.0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(cfg.dynamic_range * cfg.dynamic_range / e.mse);
  return e;
}

std::vector<double> gaussian_window(std::size_t side, double sigma) {
  const auto g = gaussian_1d(side, sigma);
  std::vector<double> w(side * side);
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) w[i * side + j] = g[i] * g[j];
  }
  return w;
}

std::size_t effective_ssim_window(std::size_t min_side, const MetricConfig& cfg) {
  if (min_side >= cfg.ssim_window) return cfg.ssim_window;
  return min_side % 2 == 1 ? min_side : min_side - 1;
}

double ssim(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg) {
  require_planes(x, y);
  const auto side = effective_ssim_window(std::min(x.width(), x.height()), cfg);
  const auto m = ssim_maps(plane_of(x), plane_of(y), side, cfg);
  double s = 0.0;
  for (std::size_t i = 0; i < m.l.size(); ++i) s += m.l[i] * m.cs[i];
  return s / static_cast<double>(m.l.size());
}

SsimTerms ssim_terms(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg) {
  require_planes(x, y);
  const auto side = effective_ssim_window(std::min(x.width(), x.height()), cfg);
  const auto m = ssim_maps(plane_of(x), plane_of(y), side, cfg);
  return {mean_of(m.l), mean_of(m.c), mean_of(m.s)};
}

int msssim_scale_count(std::size_t width, std::size_t height, const MetricConfig& cfg) {
  std::size_t side = std::min(width, height);
  int scales = 1;
  while (scales < static_cast<int>(cfg.msssim_weights.size()) && side / 2 >= cfg.ssim_window) {
    side /= 2;
    ++scales;
  }
  return scales;
}

double ms_ssim(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg, int* scales_used) {
  require_planes(x, y);
  const int scales = msssim_scale_count(x.width(), x.height(), cfg);
  double wsum = 0.0;
  for (int i = 0; i < scales; ++i) wsum += cfg.msssim_weights[static_cast<std::size_t>(i)];

  Plane px = plane_of(x), py = plane_of(y);
  double result = 1.0;
  for (int i = 0; i < scales; ++i) {
    const double w = cfg.msssim_weights[static_cast<std::size_t>(i)] / wsum;
    const auto side = effective_ssim_window(std::min(px.w, px.h), cfg);
    const auto m = ssim_maps(px, py, side, cfg);
    // Negative factors are clipped so fractional powers stay real.
    result *= std::pow(std::max(0.0, mean_of(m.cs)), w);
    if (i == scales - 1) result *= std::pow(std::max(0.0, mean_of(m.l)), w);
    if (i + 1 < scales) {
      px = downsample(px);
      py = downsample(py);
    }
  }
  if (scales_used) *scales_used = scales;
  return result;
}

double uqi(const PlanarImage& x, const PlanarImage& y, const MetricConfig& cfg) {
  require_planes(x, y);
  const std::size_t n = cfg.uqi_window;
  const Plane px = plane_of(x), py = plane_of(y);
  if (px.w < n || px.h < n) throw Error(ErrorKind::TooSmall, "image smaller than the UQI window");
  const double count = static_cast<double>(n * n);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t oy = 0; oy + n <= px.h; ++oy) {
    for (std::size_t ox = 0; ox + n <= px.w; ++ox) {
      double ux = 0.0, uy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
          ux += px(ox + i, oy + j);
          uy += py(ox + i, oy + j);
        }
      }
      ux /= count;
      uy /= count;
      double vx = 0.0, vy = 0.0, cov = 0.0;
      bool identical = true;
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
          const double a = px(ox + i, oy + j), b = py(ox + i, oy + j);
          identical = identical && a == b;
          vx += (a - ux) * (a - ux);
          vy += (b - uy) * (b - uy);
          cov += (a - ux) * (b - uy);
        }
      }
      const double den = (vx + vy) * (ux * ux + uy * uy);
      total += den == 0.0 ? (identical ? 1.0 : 0.0) : 4.0 * cov * ux * uy / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

SsimFamily ssim_family(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg) {
  require_same_dims(x.width(), x.height(), y.width(), y.height());
  require_metric_size(x.width(), x.height());
  const auto gx = to_grayscale(x), gy = to_grayscale(y);
  SsimFamily f;
  f.ssim = ssim(gx, gy, cfg);
  f.ms_ssim = ms_ssim(gx, gy, cfg, &f.ms_ssim_scales);
  f.uqi = uqi(gx, gy, cfg);
  return f;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "correlation inputs differ in length");
  if (a.empty()) throw Error(ErrorKind::TooSmall, "correlation of empty inputs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 && sbb == 0.0) throw Error(ErrorKind::ConstantInput, "correlation undefined: both inputs constant");
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

PlanarImage highpass(const RgbImage& img) {
  const std::size_t w = img.width(), h = img.height();
  if (w < 2 || h < 2) throw Error(ErrorKind::TooSmall, "high-pass filter needs at least 2x2 pixels");
  auto reflect = [](std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    if (i < 0) return static_cast<std::size_t>(-i);
    if (i >= m) return static_cast<std::size_t>(2 * m - 2 - i);
    return static_cast<std::size_t>(i);
  };
  PlanarImage out(3, w, h, ColorSpace::Rgb);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const auto xx = reflect(static_cast<std::ptrdiff_t>(x) + dx, w);
            const auto yy = reflect(static_cast<std::ptrdiff_t>(y) + dy, h);
            s += (dx == 0 && dy == 0 ? 8.0 : -1.0) * img.at(xx, yy, c);
          }
        }
        out.at(c, x, y) = s;
      }
    }
  }
  return out;
}

double pcc(const RgbImage& x, const RgbImage& y) {
  require_same_dims(x.width(), x.height(), y.width(), y.height());
  const auto a = flat(x), b = flat(y);
  return pearson(a, b);
}

double scc(const RgbImage& x, const RgbImage& y) {
  require_same_dims(x.width(), x.height(), y.width(), y.height());
  const auto hx = highpass(x), hy = highpass(y);
  return pearson(hx.data(), hy.data());
}

Correlations correlation_metrics(const RgbImage& x, const RgbImage& y, const MetricConfig&) {
  return {pcc(x, y), scc(x, y)};
}

Spectral spectral_metrics(const RgbImage& x, const RgbImage& y, const MetricConfig& cfg) {
  require_same_dims(x.width(), x.height(), y.width(), y.height());
  const std::size_t n = x.pixel_count();
  if (n == 0) throw Error(ErrorKind::TooSmall, "empty image");
  std::array<double, 3> mse{}, mu{};
  for (std::size_t yy = 0; yy < x.height(); ++yy) {
    for (std::size_t xx = 0; xx < x.width(); ++xx) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = static_cast<double>(x.at(xx, yy, c)) - static_cast<double>(y.at(xx, yy, c));
        mse[c] += d * d;
        mu[c] += y.at(xx, yy, c);
      }
    }
  }
  double rel = 0.0, abs_sq = 0.0, mu_bar = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    mse[c] /= static_cast<double>(n);
    mu[c] /= static_cast<double>(n);
    if (mu[c] == 0.0) {
      throw Error(ErrorKind::ZeroMeanReference, "reference channel " + std::to_string(c) + " has zero mean");
    }
    rel += mse[c] / (mu[c] * mu[c]);
    abs_sq += mse[c];
    mu_bar += mu[c];
  }
  mu_bar /= 3.0;
  return {100.0 * cfg.ergas_ratio * std::sqrt(rel / 3.0), 100.0 / mu_bar * std::sqrt(abs_sq / 3.0)};
}

// ---- reports -------------------------------------------------------------

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::SSIM: return "SSIM";
    case Metric::MSSSIM: return "MS-SSIM";
    case Metric::SCC: return "SCC";
    case Metric::PCC: return "PCC";
    case Metric::MSE: return "MSE";
    case Metric::RMSE: return "RMSE";
    case Metric::PSNR: return "PSNR";
    case Metric::ERGAS: return "ERGAS";
    case Metric::RASE: return "RASE";
    case Metric::UQI: return "UQI";
  }
  return "?";
}

PatchMetrics evaluate_pair(const RgbImage& predicted, const RgbImage& truth, const MetricConfig& cfg) {
  PatchMetrics p;
  auto set = [&](Metric m, std::optional<double> v) { p.values[static_cast<std::size_t>(m)] = v; };
  const auto fam = ssim_family(predicted, truth, cfg);
  set(Metric::SSIM, fam.ssim);
  set(Metric::MSSSIM, fam.ms_ssim);
  set(Metric::UQI, fam.uqi);
  const auto px = pixel_error_metrics(predicted, truth, cfg);
  set(Metric::MSE, px.mse);
  set(Metric::RMSE, px.rmse);
  set(Metric::PSNR, px.psnr);
  auto undefined_if_constant = [&](auto fn) -> std::optional<double> {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConstantInput) return std::nullopt;
      throw;
    }
  };
  set(Metric::PCC, undefined_if_constant([&] { return pcc(predicted, truth); }));
  set(Metric::SCC, undefined_if_constant([&] { return scc(predicted, truth); }));
  try {
    const auto sp = spectral_metrics(predicted, truth, cfg);
    set(Metric::ERGAS, sp.ergas);
    set(Metric::RASE, sp.rase);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ZeroMeanReference) throw;
  }
  return p;
}

Aggregate aggregate(std::span<const std::optional<double>> values) {
  Aggregate a;
  double s = 0.0;
  for (const auto& v : values) {
    if (v && std::isfinite(*v)) {
      s += *v;
      ++a.count;
    } else {
      ++a.excluded;
    }
  }
  if (a.count == 0) {
    a.mean = std::numeric_limits<double>::quiet_NaN();
    a.std = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  a.mean = s / static_cast<double>(a.count);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v && std::isfinite(*v)) ss += (*v - a.mean) * (*v - a.mean);
  }
  a.std = std::sqrt(ss / static_cast<double>(a.count));
  return a;
}

void recompute_aggregates(MetricReport& report) {
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    std::vector<std::optional<double>> col;
    col.reserve(report.patches.size());
    for (const auto& p : report.patches) col.push_back(p.values[m]);
    report.aggregates[m] = aggregate(col);
  }
}

MetricReport aggregate_report(std::span<const ImagePair> pairs, const MetricConfig& cfg,
                              std::span<const std::string> ids) {
  cfg.validate();
  if (pairs.empty()) throw Error(ErrorKind::TooSmall, "report needs at least one pair");
  if (!ids.empty() && ids.size() != pairs.size()) {
    throw Error(ErrorKind::DimensionMismatch, "id count differs from pair count");
  }
  MetricReport r;
  r.config = cfg;
  r.patches.resize(pairs.size());
  const auto w = pairs[0].second.width(), h = pairs[0].second.height();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      require_same_dims(pairs[i].second.width(), pairs[i].second.height(), w, h);
      r.patches[i] = evaluate_pair(pairs[i].first, pairs[i].second, cfg);
    } catch (const Error& e) {
      throw Error(e.kind(), "pair " + std::to_string(i) + ": " + e.what());
    }
    r.patches[i].id = ids.empty() ? std::to_string(i) : ids[i];
  }
  recompute_aggregates(r);
  return r;
}

nlohmann::json to_json(const MetricConfig& cfg) {
  return {{"dynamic_range", cfg.dynamic_range},
          {"ssim_window", cfg.ssim_window},
          {"ssim_sigma", cfg.ssim_sigma},
          {"ssim_k1", cfg.ssim_k1},
          {"ssim_k2", cfg.ssim_k2},
          {"msssim_weights", cfg.msssim_weights},
          {"uqi_window", cfg.uqi_window},
          {"ergas_ratio", cfg.ergas_ratio},
          {"scc_highpass", "laplacian 3x3 [-1 -1 -1; -1 8 -1; -1 -1 -1], reflect-101"},
          {"luminance", "BT.601"},
          {"std_estimator", "population"}};
}

namespace {

nlohmann::json number_or_marker(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "+inf" : "-inf";
  return *v;
}

}  // namespace

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json j;
  j["method"] = report.method;
  j["config"] = to_json(report.config);
  j["manifest_hash"] = report.manifest_hash;
  auto& agg = j["aggregates"];
  for (auto m : kAllMetrics) {
    const auto& a = report[m];
    agg[std::string(to_string(m))] = {{"mean", a.count ? nlohmann::json(a.mean) : nlohmann::json(nullptr)},
                                      {"std", a.count ? nlohmann::json(a.std) : nlohmann::json(nullptr)},
                                      {"count", a.count},
                                      {"excluded", a.excluded}};
  }
  auto& patches = j["patches"];
  patches = nlohmann::json::array();
  for (const auto& p : report.patches) {
    nlohmann::json e;
    e["id"] = p.id;
    for (auto m : kAllMetrics) e[std::string(to_string(m))] = number_or_marker(p[m]);
    patches.push_back(std::move(e));
  }
  return j;
}

std::string table_csv(std::span<const MetricReport> reports) {
  auto cell = [](const Aggregate& a) {
    if (a.count == 0) return std::string("n/a");
    std::ostringstream s;
    s << std::setprecision(6) << a.mean << " ± " << a.std;
    return s.str();
  };
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::ostringstream out;
  out << "Methods";
  for (const auto& r : reports) out << ',' << quote(r.method);
  out << '\n';
  for (auto m : kAllMetrics) {
    out << to_string(m);
    for (const auto& r : reports) out << ',' << quote(cell(r[m]));
    out << '\n';
  }
  return out.str();
}

}  // namespace stst
