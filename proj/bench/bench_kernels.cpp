// SPDX-License-Identifier: Apache-2.0
// Serial vs OpenMP kernels and patch-parallel normalisation, as CSV on stdout.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <CLI11.hpp>

#include "stst/kernels.hpp"
#include "stst/pipeline.hpp"
#include "stst/rng.hpp"
#include "support.hpp"

using namespace stst;
namespace k = stst::kernels;

namespace {

// Best wall clock of `reps` calls, in milliseconds.
double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void row(const char* kernel, const std::string& size, int workers, double ms, bool same) {
  std::printf("%s,%s,%d,%.3f,%s\n", kernel, size.c_str(), workers, ms, same ? "yes" : "no");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark"};
  int reps = 5;
  int max_workers = 4;
  std::size_t patches = 64;
  app.add_option("--reps", reps, "repetitions per measurement")->check(CLI::PositiveNumber);
  app.add_option("--workers", max_workers, "largest worker count")->check(CLI::PositiveNumber);
  app.add_option("--patches", patches, "patches for the normalisation rows")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Rng rng(1);
  std::printf("kernel,size,workers,best_ms,matches_serial\n");

  for (std::size_t n : {64, 128, 256}) {
    const auto a = random_vec(rng, n * n), b = random_vec(rng, n * n);
    std::vector<double> ref(n * n), out(n * n);
    const k::GemmShape s{n, n, n};
    const std::string size = std::to_string(n) + "^3";
    row("gemm", size, 0, best_ms(reps, [&] { k::gemm_serial(k::Transpose::No, k::Transpose::No, s, 1, a, b, 0, ref); }),
        true);
    for (int w = 1; w <= max_workers; w *= 2) {
      k::set_num_workers(w);
      const double ms =
          best_ms(reps, [&] { k::gemm_parallel(k::Transpose::No, k::Transpose::No, s, 1, a, b, 0, out); });
      row("gemm", size, w, ms, out == ref);
    }
  }

  for (std::size_t side : {256, 1024}) {
    const std::size_t px = side * side;
    const auto pinv = random_vec(rng, 6);
    const auto od = random_vec(rng, 3 * px);
    std::vector<double> ref(2 * px), out(2 * px);
    const std::string size = std::to_string(side) + "^2";
    row("project_clamped", size, 0, best_ms(reps, [&] { k::project_clamped_serial(pinv, 2, od, px, ref); }), true);
    for (int w = 1; w <= max_workers; w *= 2) {
      k::set_num_workers(w);
      const double ms = best_ms(reps, [&] { k::project_clamped_parallel(pinv, 2, od, px, out); });
      row("project_clamped", size, w, ms, out == ref);
    }
  }
  k::set_num_workers(1);

  std::vector<RgbImage> src;
  for (std::size_t i = 0; i < patches; ++i) src.push_back(testing::synthetic_tissue(10 + i, 64, 64));
  NormalizerOptions opts;
  opts.reference = testing::synthetic_tissue(3, 64, 64);
  for (auto m : {Method::Reinhard, Method::Macenko}) {
    const auto n = Normalizer::create(m, opts);
    const auto ref = normalize_all(n, src, 1);
    const std::string name = "normalize_" + std::string(to_string(m));
    for (int w = 1; w <= max_workers; w *= 2) {
      std::vector<RgbImage> out;
      const double ms = best_ms(reps, [&] { out = normalize_all(n, src, w); });
      row(name.c_str(), std::to_string(patches) + "x64^2", w, ms, out == ref);
    }
  }
  return 0;
}
