#pragma once

#include <cstdint>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "aiacycle/parallel.hpp"

namespace aiacycle {

// Float storage with double accumulation throughout. Work is split into
// four-row blocks of C; each block is produced by exactly one thread with a
// fixed inner-loop order (k ascending for every output element), so results
// do not depend on the thread count. B is promoted to double up front when
// the promoted copy stays cache-resident; both paths round identically.

namespace detail {

constexpr std::int64_t kPromoteLimit = 160 * 1024;  // elements of B
constexpr std::int64_t kColumnTile = 256;           // keeps 4xN accumulators in L1

#if defined(__AVX512F__)

// 4-row x 16-column register-tiled microkernel. Every output element is a
// k-ascending chain of double FMAs, matching the scalar path's contraction.
template <bool kPromoted>
inline void gemm_block4_simd(const float* A, const float* Bf, const double* Bd, float* C, std::int64_t M,
                             std::int64_t N, std::int64_t K, bool accumulate) {
    parallel_for((M + 3) / 4, [&](std::int64_t blk0, std::int64_t blk1) {
        for (std::int64_t blk = blk0; blk < blk1; ++blk) {
            const std::int64_t i0 = blk * 4;
            const std::int64_t rows = std::min<std::int64_t>(4, M - i0);
            const float* r0 = A + i0 * K;
            const float* r1 = A + std::min(i0 + 1, M - 1) * K;
            const float* r2 = A + std::min(i0 + 2, M - 1) * K;
            const float* r3 = A + std::min(i0 + 3, M - 1) * K;
            std::int64_t j = 0;
            if (rows == 4) {
                for (; j + 16 <= N; j += 16) {
                    __m512d a00 = _mm512_setzero_pd(), a01 = _mm512_setzero_pd();
                    __m512d a10 = _mm512_setzero_pd(), a11 = _mm512_setzero_pd();
                    __m512d a20 = _mm512_setzero_pd(), a21 = _mm512_setzero_pd();
                    __m512d a30 = _mm512_setzero_pd(), a31 = _mm512_setzero_pd();
                    for (std::int64_t k = 0; k < K; ++k) {
                        __m512d b0, b1;
                        if (kPromoted) {
                            const double* b = Bd + k * N + j;
                            b0 = _mm512_loadu_pd(b);
                            b1 = _mm512_loadu_pd(b + 8);
                        } else {
                            const float* b = Bf + k * N + j;
                            b0 = _mm512_cvtps_pd(_mm256_loadu_ps(b));
                            b1 = _mm512_cvtps_pd(_mm256_loadu_ps(b + 8));
                        }
                        const __m512d v0 = _mm512_set1_pd(static_cast<double>(r0[k]));
                        const __m512d v1 = _mm512_set1_pd(static_cast<double>(r1[k]));
                        const __m512d v2 = _mm512_set1_pd(static_cast<double>(r2[k]));
                        const __m512d v3 = _mm512_set1_pd(static_cast<double>(r3[k]));
                        a00 = _mm512_fmadd_pd(v0, b0, a00);
                        a01 = _mm512_fmadd_pd(v0, b1, a01);
                        a10 = _mm512_fmadd_pd(v1, b0, a10);
                        a11 = _mm512_fmadd_pd(v1, b1, a11);
                        a20 = _mm512_fmadd_pd(v2, b0, a20);
                        a21 = _mm512_fmadd_pd(v2, b1, a21);
                        a30 = _mm512_fmadd_pd(v3, b0, a30);
                        a31 = _mm512_fmadd_pd(v3, b1, a31);
                    }
                    alignas(64) double tmp[16];
                    const auto flush = [&](std::int64_t row, __m512d x0, __m512d x1) {
                        _mm512_store_pd(tmp, x0);
                        _mm512_store_pd(tmp + 8, x1);
                        float* c = C + (i0 + row) * N + j;
                        if (accumulate)
                            for (int t = 0; t < 16; ++t) c[t] += static_cast<float>(tmp[t]);
                        else
                            for (int t = 0; t < 16; ++t) c[t] = static_cast<float>(tmp[t]);
                    };
                    flush(0, a00, a01);
                    flush(1, a10, a11);
                    flush(2, a20, a21);
                    flush(3, a30, a31);
                }
            }
            // remainder columns and short row blocks: scalar fused chains
            for (std::int64_t r = 0; r < rows; ++r) {
                const float* ar = A + (i0 + r) * K;
                for (std::int64_t jj = (rows == 4 ? j : 0); jj < N; ++jj) {
                    double acc = 0.0;
                    for (std::int64_t k = 0; k < K; ++k) {
                        const double b = kPromoted ? Bd[k * N + jj] : static_cast<double>(Bf[k * N + jj]);
                        acc = std::fma(static_cast<double>(ar[k]), b, acc);
                    }
                    float* c = C + (i0 + r) * N + jj;
                    if (accumulate)
                        *c += static_cast<float>(acc);
                    else
                        *c = static_cast<float>(acc);
                }
            }
        }
    });
}

#endif  // __AVX512F__

template <bool kPromoted>
inline void gemm_block4(const float* A, const float* Bf, const double* Bd, float* C, std::int64_t M,
                        std::int64_t N, std::int64_t K, bool accumulate) {
    parallel_for((M + 3) / 4, [&](std::int64_t blk0, std::int64_t blk1) {
        std::vector<double> acc(static_cast<std::size_t>(4 * std::min(N, kColumnTile)));
        for (std::int64_t blk = blk0; blk < blk1; ++blk) {
            const std::int64_t i0 = blk * 4;
            const std::int64_t rows = std::min<std::int64_t>(4, M - i0);
            for (std::int64_t j0 = 0; j0 < N; j0 += kColumnTile) {
                const std::int64_t jn = std::min(kColumnTile, N - j0);
                double* a0 = acc.data();
                double* a1 = acc.data() + jn;
                double* a2 = acc.data() + 2 * jn;
                double* a3 = acc.data() + 3 * jn;
                if (rows == 4) {
                    for (std::int64_t j = 0; j < jn; ++j) a0[j] = a1[j] = a2[j] = a3[j] = 0.0;
                    const float* r0 = A + (i0 + 0) * K;
                    const float* r1 = A + (i0 + 1) * K;
                    const float* r2 = A + (i0 + 2) * K;
                    const float* r3 = A + (i0 + 3) * K;
                    for (std::int64_t k = 0; k < K; ++k) {
                        const double v0 = r0[k], v1 = r1[k], v2 = r2[k], v3 = r3[k];
                        if (kPromoted) {
                            const double* b = Bd + k * N + j0;
                            for (std::int64_t j = 0; j < jn; ++j) {
                                const double bj = b[j];
                                a0[j] += v0 * bj;
                                a1[j] += v1 * bj;
                                a2[j] += v2 * bj;
                                a3[j] += v3 * bj;
                            }
                        } else {
                            const float* b = Bf + k * N + j0;
                            for (std::int64_t j = 0; j < jn; ++j) {
                                const double bj = static_cast<double>(b[j]);
                                a0[j] += v0 * bj;
                                a1[j] += v1 * bj;
                                a2[j] += v2 * bj;
                                a3[j] += v3 * bj;
                            }
                        }
                    }
                    for (std::int64_t r = 0; r < 4; ++r) {
                        float* c = C + (i0 + r) * N + j0;
                        const double* a = acc.data() + r * jn;
                        if (accumulate)
                            for (std::int64_t j = 0; j < jn; ++j) c[j] += static_cast<float>(a[j]);
                        else
                            for (std::int64_t j = 0; j < jn; ++j) c[j] = static_cast<float>(a[j]);
                    }
                } else {
                    for (std::int64_t r = 0; r < rows; ++r) {
                        for (std::int64_t j = 0; j < jn; ++j) a0[j] = 0.0;
                        const float* ar = A + (i0 + r) * K;
                        for (std::int64_t k = 0; k < K; ++k) {
                            const double av = ar[k];
                            if (kPromoted) {
                                const double* b = Bd + k * N + j0;
                                for (std::int64_t j = 0; j < jn; ++j) a0[j] += av * b[j];
                            } else {
                                const float* b = Bf + k * N + j0;
                                for (std::int64_t j = 0; j < jn; ++j) a0[j] += av * static_cast<double>(b[j]);
                            }
                        }
                        float* c = C + (i0 + r) * N + j0;
                        if (accumulate)
                            for (std::int64_t j = 0; j < jn; ++j) c[j] += static_cast<float>(a0[j]);
                        else
                            for (std::int64_t j = 0; j < jn; ++j) c[j] = static_cast<float>(a0[j]);
                    }
                }
            }
        }
    });
}

inline void gemm_dense(const float* A, const float* B, float* C, std::int64_t M, std::int64_t N, std::int64_t K,
                       bool accumulate) {
    if (K * N <= kPromoteLimit) {
        std::vector<double> bd(static_cast<std::size_t>(K * N));
        for (std::int64_t i = 0; i < K * N; ++i) bd[static_cast<std::size_t>(i)] = B[i];
#if defined(__AVX512F__)
        gemm_block4_simd<true>(A, nullptr, bd.data(), C, M, N, K, accumulate);
#else
        gemm_block4<true>(A, nullptr, bd.data(), C, M, N, K, accumulate);
#endif
    } else {
#if defined(__AVX512F__)
        gemm_block4_simd<false>(A, B, nullptr, C, M, N, K, accumulate);
#else
        gemm_block4<false>(A, B, nullptr, C, M, N, K, accumulate);
#endif
    }
}

/// Cache-blocked out-of-place transpose: dst[c * rows + r] = src[r * cols + c].
inline void transpose_blocked(const float* src, float* dst, std::int64_t rows, std::int64_t cols) {
    constexpr std::int64_t T = 32;
    parallel_for((rows + T - 1) / T, [&](std::int64_t rb0, std::int64_t rb1) {
        for (std::int64_t rb = rb0; rb < rb1; ++rb) {
            const std::int64_t r0 = rb * T;
            const std::int64_t r1 = std::min(rows, r0 + T);
            for (std::int64_t c0 = 0; c0 < cols; c0 += T) {
                const std::int64_t c1 = std::min(cols, c0 + T);
                for (std::int64_t r = r0; r < r1; ++r)
                    for (std::int64_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
            }
        }
    });
}

}  // namespace detail

/// C[M,N] = A[M,K] * B[K,N]; adds into C when accumulate is set.
inline void gemm_nn(const float* A, const float* B, float* C,
                    std::int64_t M, std::int64_t N, std::int64_t K, bool accumulate = false) {
    detail::gemm_dense(A, B, C, M, N, K, accumulate);
}

/// C[M,N] = A[M,K] * B[N,K]^T.
inline void gemm_nt(const float* A, const float* B, float* C,
                    std::int64_t M, std::int64_t N, std::int64_t K, bool accumulate = false) {
    std::vector<float> bt(static_cast<std::size_t>(K * N));
    detail::transpose_blocked(B, bt.data(), N, K);
    detail::gemm_dense(A, bt.data(), C, M, N, K, accumulate);
}

/// C[M,N] = A[K,M]^T * B[K,N].
inline void gemm_tn(const float* A, const float* B, float* C,
                    std::int64_t M, std::int64_t N, std::int64_t K, bool accumulate = false) {
    std::vector<float> at(static_cast<std::size_t>(K * M));
    detail::transpose_blocked(A, at.data(), K, M);
    detail::gemm_dense(at.data(), B, C, M, N, K, accumulate);
}

}  // namespace aiacycle
