// SPDX-License-Identifier: Apache-2.0
#include "stst/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <vector>

#include "stst/error.hpp"

namespace stst::kernels {

namespace {

std::atomic<int> g_workers{1};

void check_sizes(Transpose ta, Transpose tb, GemmShape s, std::span<const double> a, std::span<const double> b,
                 std::span<double> c) {
  (void)ta;
  (void)tb;
  if (a.size() < s.m * s.k || b.size() < s.k * s.n || c.size() < s.m * s.n) {
    throw Error(ErrorKind::ShapeMismatch, "gemm operand buffers smaller than declared shape");
  }
}

// Computes one row of C. Each element is reduced over p in increasing order.
void gemm_row(std::size_t i, Transpose ta, Transpose tb, GemmShape s, double alpha, const double* a,
              const double* b, double beta, double* c, double* acc) {
  std::fill(acc, acc + s.n, 0.0);
  if (tb == Transpose::No) {
    for (std::size_t p = 0; p < s.k; ++p) {
      const double av = ta == Transpose::No ? a[i * s.k + p] : a[p * s.m + i];
      if (av == 0.0) continue;
      const double* brow = b + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) acc[j] += av * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < s.n; ++j) {
      const double* bcol = b + j * s.k;
      double sum = 0.0;
      if (ta == Transpose::No) {
        const double* arow = a + i * s.k;
        for (std::size_t p = 0; p < s.k; ++p) sum += arow[p] * bcol[p];
      } else {
        for (std::size_t p = 0; p < s.k; ++p) sum += a[p * s.m + i] * bcol[p];
      }
      acc[j] = sum;
    }
  }
  double* crow = c + i * s.n;
  if (beta == 0.0) {
    for (std::size_t j = 0; j < s.n; ++j) crow[j] = alpha * acc[j];
  } else {
    for (std::size_t j = 0; j < s.n; ++j) crow[j] = alpha * acc[j] + beta * crow[j];
  }
}

}  // namespace

void gemm_serial(Transpose ta, Transpose tb, GemmShape s, double alpha, std::span<const double> a,
                 std::span<const double> b, double beta, std::span<double> c) {
  check_sizes(ta, tb, s, a, b, c);
  std::vector<double> acc(s.n);
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(i, ta, tb, s, alpha, a.data(), b.data(), beta, c.data(), acc.data());
}

void gemm_parallel(Transpose ta, Transpose tb, GemmShape s, double alpha, std::span<const double> a,
                   std::span<const double> b, double beta, std::span<double> c) {
  check_sizes(ta, tb, s, a, b, c);
  const auto rows = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel num_threads(std::max(1, g_workers.load()))
  {
    std::vector<double> acc(s.n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      gemm_row(static_cast<std::size_t>(i), ta, tb, s, alpha, a.data(), b.data(), beta, c.data(), acc.data());
    }
  }
}

void gemm(Transpose ta, Transpose tb, GemmShape s, double alpha, std::span<const double> a, std::span<const double> b,
          double beta, std::span<double> c) {
  if (g_workers.load() > 1 && s.m > 1) {
    gemm_parallel(ta, tb, s, alpha, a, b, beta, c);
  } else {
    gemm_serial(ta, tb, s, alpha, a, b, beta, c);
  }
}

namespace {

inline void project_pixel(std::span<const double> pinv, std::size_t stains, const double* od, std::size_t pixels,
                          std::size_t i, double* out) {
  const double r = od[i];
  const double g = od[pixels + i];
  const double b = od[2 * pixels + i];
  for (std::size_t k = 0; k < stains; ++k) {
    const double v = pinv[3 * k] * r + pinv[3 * k + 1] * g + pinv[3 * k + 2] * b;
    out[k * pixels + i] = v > 0.0 ? v : 0.0;
  }
}

}  // namespace

void project_clamped_serial(std::span<const double> pinv, std::size_t stains, std::span<const double> od,
                            std::size_t pixels, std::span<double> out) {
  for (std::size_t i = 0; i < pixels; ++i) project_pixel(pinv, stains, od.data(), pixels, i, out.data());
}

void project_clamped_parallel(std::span<const double> pinv, std::size_t stains, std::span<const double> od,
                              std::size_t pixels, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(pixels);
#pragma omp parallel for schedule(static) num_threads(std::max(1, g_workers.load()))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    project_pixel(pinv, stains, od.data(), pixels, static_cast<std::size_t>(i), out.data());
  }
}

void set_num_workers(int workers) { g_workers.store(std::max(1, workers)); }

int num_workers() { return g_workers.load(); }

}  // namespace stst::kernels
