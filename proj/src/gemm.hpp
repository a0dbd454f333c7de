#pragma once

// Row-major matrix products used by the conv and dense kernels. Rows of C are
// distributed over OpenMP threads; each element of C is accumulated by a
// single thread in a fixed k order, so the result is independent of the
// thread count.

#include <algorithm>
#include <cstddef>

namespace skinnet::detail {

inline constexpr std::size_t kBlockN = 512;

/// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>((M + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rb = 0; rb < rows; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * 4;
    const std::size_t ni = std::min<std::size_t>(4, M - i0);
    if (!accumulate)
      for (std::size_t r = 0; r < ni; ++r) std::fill(C + (i0 + r) * N, C + (i0 + r + 1) * N, T(0));
    for (std::size_t j0 = 0; j0 < N; j0 += kBlockN) {
      const std::size_t nj = std::min(kBlockN, N - j0);
      if (ni == 4) {
        T* c0 = C + (i0 + 0) * N + j0;
        T* c1 = C + (i0 + 1) * N + j0;
        T* c2 = C + (i0 + 2) * N + j0;
        T* c3 = C + (i0 + 3) * N + j0;
        const T* a0 = A + (i0 + 0) * K;
        const T* a1 = A + (i0 + 1) * K;
        const T* a2 = A + (i0 + 2) * K;
        const T* a3 = A + (i0 + 3) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const T* b = B + k * N + j0;
          const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
#pragma omp simd
          for (std::size_t j = 0; j < nj; ++j) {
            const T bj = b[j];
            c0[j] += v0 * bj;
            c1[j] += v1 * bj;
            c2[j] += v2 * bj;
            c3[j] += v3 * bj;
          }
        }
      } else {
        for (std::size_t r = 0; r < ni; ++r) {
          T* c = C + (i0 + r) * N + j0;
          const T* a = A + (i0 + r) * K;
          for (std::size_t k = 0; k < K; ++k) {
            const T* b = B + k * N + j0;
            const T v = a[k];
#pragma omp simd
            for (std::size_t j = 0; j < nj; ++j) c[j] += v * b[j];
          }
        }
      }
    }
  }
}

/// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(M); ++si) {
    const auto i = static_cast<std::size_t>(si);
    const T* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      C[i * N + j] = accumulate ? C[i * N + j] + s : s;
    }
  }
}

/// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>((M + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rb = 0; rb < rows; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * 4;
    const std::size_t ni = std::min<std::size_t>(4, M - i0);
    if (!accumulate)
      for (std::size_t r = 0; r < ni; ++r) std::fill(C + (i0 + r) * N, C + (i0 + r + 1) * N, T(0));
    for (std::size_t j0 = 0; j0 < N; j0 += kBlockN) {
      const std::size_t nj = std::min(kBlockN, N - j0);
      for (std::size_t k = 0; k < K; ++k) {
        const T* b = B + k * N + j0;
        for (std::size_t r = 0; r < ni; ++r) {
          const T v = A[k * M + i0 + r];
          T* c = C + (i0 + r) * N + j0;
#pragma omp simd
          for (std::size_t j = 0; j < nj; ++j) c[j] += v * b[j];
        }
      }
    }
  }
}

/// out[cols, rows] = in[rows, cols]^T, tiled.
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kTile = 32;
  const auto tiles = static_cast<std::ptrdiff_t>((rows + kTile - 1) / kTile);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < tiles; ++t) {
    const std::size_t r0 = static_cast<std::size_t>(t) * kTile;
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

}  // namespace skinnet::detail
