#pragma once

// Dense arithmetic kernels behind the tensor core.
//
// Every kernel has a portable scalar reference and, where it pays off, an
// AVX2+FMA variant compiled into its own translation unit. The variant is
// picked once at first use from CPUID; PQC_SIMD=scalar in the environment (or
// force_isa) pins the reference path. The double-precision overloads are
// scalar only: they serve 64-bit gradient checks, not training.

#include <cstddef>
#include <string_view>

namespace pqc::simd {

enum class Isa { kScalar, kAvx2 };

bool isa_supported(Isa isa);
Isa active_isa();
// Test hook. Throws std::invalid_argument when the CPU lacks the ISA.
void force_isa(Isa isa);
std::string_view isa_name(Isa isa);

// C[m x n] = alpha * op(A) * op(B) + beta * C, all row-major.
// op(A) is m x k; with trans_a the stored A is k x m. Likewise for B.
// beta == 0 overwrites C without reading it.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, float alpha, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);

void exp_inplace(float* x, std::size_t n);
void exp_inplace(double* x, std::size_t n);

// Row-wise numerically stable softmax; in and out may alias.
void softmax_rows(const float* in, float* out, std::size_t rows,
                  std::size_t cols);
void softmax_rows(const double* in, double* out, std::size_t rows,
                  std::size_t cols);

namespace scalar {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc);
template <typename T>
void exp_inplace(T* x, std::size_t n);
template <typename T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t cols);

}  // namespace scalar

namespace avx2 {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, float alpha, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void exp_inplace(float* x, std::size_t n);
void softmax_rows(const float* in, float* out, std::size_t rows,
                  std::size_t cols);

}  // namespace avx2

}  // namespace pqc::simd
