#pragma once

#include <cstddef>

// Dense inner loops shared by the ops. All matrices are row-major.
namespace focusmix::numerics::kernels {

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s0{0}, s1{0}, s2{0}, s3{0};
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

// y[m] += W[m x n] x[n]
template <typename T>
inline void gemv_acc(const T* W, const T* x, T* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) y[i] += dot(W + i * n, x, n);
}

// x[n] += W[m x n]^T g[m]
template <typename T>
inline void gemv_t_acc(const T* W, const T* g, T* x, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T gi = g[i];
    if (gi == T{0}) continue;
    const T* w = W + i * n;
    for (std::size_t j = 0; j < n; ++j) x[j] += gi * w[j];
  }
}

// W[m x n] += g[m] x[n]^T
template <typename T>
inline void ger_acc(T* W, const T* g, const T* x, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T gi = g[i];
    if (gi == T{0}) continue;
    T* w = W + i * n;
    for (std::size_t j = 0; j < n; ++j) w[j] += gi * x[j];
  }
}

template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

}  // namespace focusmix::numerics::kernels
