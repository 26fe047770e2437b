// Row-major matrix multiply kernels backing the convolution ops.
// All variants accumulate into C, so callers zero C when they need a plain
// product. Loop order keeps the innermost stride unit-length, which is what
// the compiler needs to vectorize these.
#pragma once

#include <cstddef>

namespace multinet {

// C(M,N) += A(M,K) * B(K,N)
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<size_t>(i) * K;
    T* c = C + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C(M,N) += A(M,K) * B(N,K)^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<size_t>(i) * K;
    T* c = C + static_cast<size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* b = B + static_cast<size_t>(j) * K;
      T acc = T(0);
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

// C(M,N) += A(K,M)^T * B(K,N)
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int k = 0; k < K; ++k) {
    const T* a = A + static_cast<size_t>(k) * M;
    const T* b = B + static_cast<size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace multinet
