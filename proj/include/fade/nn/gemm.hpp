#pragma once

#include <cstddef>

namespace fade::nn {

// Deterministic dense kernels. Every output element of gemm_acc is accumulated
// as c = fma(a[i][0], b[0][j], c), then k = 1, 2, ... in ascending order, so the
// result is independent of tiling, vector width and build-time SIMD level.

/// C[m x n] += A[m x k] * B[k x n], all row-major with explicit leading dimensions.
template <typename Real>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k,
              const Real* a, std::size_t lda,
              const Real* b, std::size_t ldb,
              Real* c, std::size_t ldc);

/// dst[cols x rows] = transpose(src[rows x cols]).
template <typename Real>
void transpose(const Real* src, std::size_t rows, std::size_t cols, Real* dst);

/// Name of the SIMD path compiled into gemm_acc for Real = float.
const char* gemm_isa() noexcept;

}  // namespace fade::nn
