#include <algorithm>
#include <cmath>

#include "pqc/simd/kernels.hpp"

namespace pqc::simd::scalar {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (k == 0 || alpha == T(0)) return;

  if (!trans_b) {
    // i-p-j order keeps the innermost loop contiguous in B and C.
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bcol = b + j * ldb;
      T acc = 0;
      if (trans_a) {
        for (std::size_t p = 0; p < k; ++p) acc += a[p * lda + i] * bcol[p];
      } else {
        const T* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bcol[p];
      }
      crow[j] += alpha * acc;
    }
  }
}

template <typename T>
void exp_inplace(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

template <typename T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in + r * cols;
    T* dst = out + r * cols;
    const T mx = *std::max_element(src, src + cols);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - mx);
      sum += dst[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < cols; ++j) dst[j] *= inv;
  }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t,
                          float, const float*, std::size_t, const float*,
                          std::size_t, float, float*, std::size_t);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t,
                           double, const double*, std::size_t, const double*,
                           std::size_t, double, double*, std::size_t);
template void exp_inplace<float>(float*, std::size_t);
template void exp_inplace<double>(double*, std::size_t);
template void softmax_rows<float>(const float*, float*, std::size_t,
                                  std::size_t);
template void softmax_rows<double>(const double*, double*, std::size_t,
                                   std::size_t);

}  // namespace pqc::simd::scalar
