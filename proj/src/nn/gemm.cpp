#include "fade/nn/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
#include <immintrin.h>
#endif

namespace fade::nn {

namespace {

constexpr std::size_t kBlockK = 192;

template <typename Real>
void gemm_generic(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                  const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
    for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
        const std::size_t k1 = std::min(k, k0 + kBlockK);
        for (std::size_t i = 0; i < m; ++i) {
            Real* crow = c + i * ldc;
            const Real* arow = a + i * lda;
            for (std::size_t p = k0; p < k1; ++p) {
                const Real av = arow[p];
                const Real* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
            }
        }
    }
}

#if defined(__AVX512F__)

using Vec = __m512;
constexpr std::size_t kLanes = 16;
using Mask = __mmask16;

inline Mask tail_mask(std::size_t width) {
    return width >= kLanes ? Mask(0xFFFF) : Mask((1u << width) - 1u);
}
inline Vec load(const float* p, Mask mask) { return _mm512_maskz_loadu_ps(mask, p); }
inline void store(float* p, Vec v, Mask mask) { _mm512_mask_storeu_ps(p, mask, v); }
inline Vec broadcast(float v) { return _mm512_set1_ps(v); }
inline Vec load_full(const float* p) { return _mm512_loadu_ps(p); }
inline void store_full(float* p, Vec v) { _mm512_storeu_ps(p, v); }
inline Vec fmadd(Vec a, Vec b, Vec c) { return _mm512_fmadd_ps(a, b, c); }
constexpr const char* kIsa = "avx512";

#elif defined(__AVX2__) && defined(__FMA__)

using Vec = __m256;
constexpr std::size_t kLanes = 8;
using Mask = __m256i;

inline Mask tail_mask(std::size_t width) {
    const int w = static_cast<int>(std::min(width, kLanes));
    return _mm256_cmpgt_epi32(_mm256_set1_epi32(w), _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7));
}
inline Vec load(const float* p, Mask mask) { return _mm256_maskload_ps(p, mask); }
inline void store(float* p, Vec v, Mask mask) { _mm256_maskstore_ps(p, mask, v); }
inline Vec broadcast(float v) { return _mm256_set1_ps(v); }
inline Vec load_full(const float* p) { return _mm256_loadu_ps(p); }
inline void store_full(float* p, Vec v) { _mm256_storeu_ps(p, v); }
inline Vec fmadd(Vec a, Vec b, Vec c) { return _mm256_fmadd_ps(a, b, c); }
constexpr const char* kIsa = "avx2";

#else
constexpr const char* kIsa = "generic";
#endif

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))

constexpr std::size_t kVecs = 2;
constexpr std::size_t kTileCols = kVecs * kLanes;
constexpr std::size_t kTileRows = 12;

// One register tile: MR rows by up to kTileCols columns over kc steps of k.
// `a` is a packed panel a[p * MR + r]; `b` is a packed panel b[p * kTileCols + j].
template <std::size_t MR, bool kFull>
void micro_tile(std::size_t kc, std::size_t width, const float* a, const float* b, float* c,
                std::size_t ldc) {
    const Mask m0 = tail_mask(width);
    const Mask m1 = tail_mask(width > kLanes ? width - kLanes : 0);
    Vec acc0[MR];
    Vec acc1[MR];
    for (std::size_t r = 0; r < MR; ++r) {
        if constexpr (kFull) {
            acc0[r] = load_full(c + r * ldc);
            acc1[r] = load_full(c + r * ldc + kLanes);
        } else {
            acc0[r] = load(c + r * ldc, m0);
            acc1[r] = load(c + r * ldc + kLanes, m1);
        }
    }
    for (std::size_t p = 0; p < kc; ++p) {
        Vec b0, b1;
        if constexpr (kFull) {
            b0 = load_full(b + p * kTileCols);
            b1 = load_full(b + p * kTileCols + kLanes);
        } else {
            b0 = load(b + p * kTileCols, m0);
            b1 = load(b + p * kTileCols + kLanes, m1);
        }
        const float* ap = a + p * MR;
        for (std::size_t r = 0; r < MR; ++r) {
            const Vec av = broadcast(ap[r]);
            acc0[r] = fmadd(av, b0, acc0[r]);
            acc1[r] = fmadd(av, b1, acc1[r]);
        }
    }
    for (std::size_t r = 0; r < MR; ++r) {
        if constexpr (kFull) {
            store_full(c + r * ldc, acc0[r]);
            store_full(c + r * ldc + kLanes, acc1[r]);
        } else {
            store(c + r * ldc, acc0[r], m0);
            store(c + r * ldc + kLanes, acc1[r], m1);
        }
    }
}

using TileFn = void (*)(std::size_t, std::size_t, const float*, const float*, float*, std::size_t);

template <bool kFull>
constexpr TileFn kTiles[kTileRows + 1] = {
    nullptr,
    &micro_tile<1, kFull>,
    &micro_tile<2, kFull>,
    &micro_tile<3, kFull>,
    &micro_tile<4, kFull>,
    &micro_tile<5, kFull>,
    &micro_tile<6, kFull>,
    &micro_tile<7, kFull>,
    &micro_tile<8, kFull>,
    &micro_tile<9, kFull>,
    &micro_tile<10, kFull>,
    &micro_tile<11, kFull>,
    &micro_tile<12, kFull>,
};

void gemm_simd(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc) {
    const std::size_t row_tiles = (m + kTileRows - 1) / kTileRows;
    thread_local std::vector<float> packed;
    thread_local std::vector<float> panel_b;
    packed.resize(row_tiles * kTileRows * kBlockK);
    panel_b.resize(kBlockK * kTileCols);
    for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
        const std::size_t kc = std::min(kBlockK, k - k0);
        // Pack A[:, k0:k0+kc] into MR-interleaved panels.
        for (std::size_t t = 0; t < row_tiles; ++t) {
            const std::size_t i0 = t * kTileRows;
            const std::size_t mr = std::min(kTileRows, m - i0);
            float* panel = packed.data() + t * kTileRows * kBlockK;
            for (std::size_t r = 0; r < mr; ++r) {
                const float* arow = a + (i0 + r) * lda + k0;
                for (std::size_t p = 0; p < kc; ++p) panel[p * mr + r] = arow[p];
            }
        }
        for (std::size_t j0 = 0; j0 < n; j0 += kTileCols) {
            const std::size_t width = std::min(kTileCols, n - j0);
            const bool full = width == kTileCols;
            for (std::size_t p = 0; p < kc; ++p) {
                const float* brow = b + (k0 + p) * ldb + j0;
                float* dst = panel_b.data() + p * kTileCols;
                std::copy(brow, brow + width, dst);
                std::fill(dst + width, dst + kTileCols, 0.0f);
            }
            for (std::size_t t = 0; t < row_tiles; ++t) {
                const std::size_t i0 = t * kTileRows;
                const std::size_t mr = std::min(kTileRows, m - i0);
                const float* panel = packed.data() + t * kTileRows * kBlockK;
                (full ? kTiles<true> : kTiles<false>)[mr](kc, width, panel, panel_b.data(),
                                                          c + i0 * ldc + j0, ldc);
            }
        }
    }
}

#endif

}  // namespace

template <>
void gemm_acc<float>(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                     const float* b, std::size_t ldb, float* c, std::size_t ldc) {
    if (m == 0 || n == 0 || k == 0) return;
#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
    // Packing does not pay off for single rows and tiny products.
    if (m < 4 || m * n * k < 16384)
        gemm_generic(m, n, k, a, lda, b, ldb, c, ldc);
    else
        gemm_simd(m, n, k, a, lda, b, ldb, c, ldc);
#else
    gemm_generic(m, n, k, a, lda, b, ldb, c, ldc);
#endif
}

template <>
void gemm_acc<double>(std::size_t m, std::size_t n, std::size_t k, const double* a,
                      std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc) {
    if (m == 0 || n == 0 || k == 0) return;
    gemm_generic(m, n, k, a, lda, b, ldb, c, ldc);
}

template <typename Real>
void transpose(const Real* src, std::size_t rows, std::size_t cols, Real* dst) {
    constexpr std::size_t kBlock = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
        const std::size_t r1 = std::min(rows, r0 + kBlock);
        for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
            const std::size_t c1 = std::min(cols, c0 + kBlock);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t col = c0; col < c1; ++col) dst[col * rows + r] = src[r * cols + col];
        }
    }
}

template void transpose<float>(const float*, std::size_t, std::size_t, float*);
template void transpose<double>(const double*, std::size_t, std::size_t, double*);

const char* gemm_isa() noexcept { return kIsa; }

}  // namespace fade::nn
