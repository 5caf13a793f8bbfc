// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense kernels with an OpenMP implementation and a serial reference.
// Both produce bit-identical results: work is split over output rows and
// every output element is reduced in the same fixed order.

#include <cstddef>
#include <span>

namespace stst::kernels {

enum class Transpose { No, Yes };

struct GemmShape {
  std::size_t m;  // rows of op(A) and C
  std::size_t n;  // cols of op(B) and C
  std::size_t k;  // inner dimension
};

/// C = alpha * op(A) * op(B) + beta * C, all row-major.
void gemm_serial(Transpose ta, Transpose tb, GemmShape s, double alpha, std::span<const double> a,
                 std::span<const double> b, double beta, std::span<double> c);
void gemm_parallel(Transpose ta, Transpose tb, GemmShape s, double alpha, std::span<const double> a,
                   std::span<const double> b, double beta, std::span<double> c);

/// Dispatches to the parallel kernel when more than one worker is configured.
void gemm(Transpose ta, Transpose tb, GemmShape s, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c);

/// Per-pixel projection `out[k][i] = max(0, sum_c pinv[k][c] * in[c][i])`
/// for channel-major planes; `pinv` is K x 3 row-major.
void project_clamped_serial(std::span<const double> pinv, std::size_t stains, std::span<const double> od,
                            std::size_t pixels, std::span<double> out);
void project_clamped_parallel(std::span<const double> pinv, std::size_t stains, std::span<const double> od,
                              std::size_t pixels, std::span<double> out);

/// Worker count for the parallel kernels (1 disables OpenMP dispatch).
void set_num_workers(int workers);
int num_workers();

}  // namespace stst::kernels
