#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "pqc/simd/kernels.hpp"

namespace pqc::simd {
namespace {

bool cpu_has_avx2() {
#if defined(PQC_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("PQC_SIMD")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) {
  return isa == Isa::kScalar || cpu_has_avx2();
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("requested ISA not supported by this CPU");
  }
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, float alpha, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
#if defined(PQC_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) {
    avx2::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
#endif
  scalar::gemm<float>(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta,
                      c, ldc);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  scalar::gemm<double>(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta,
                       c, ldc);
}

void exp_inplace(float* x, std::size_t n) {
#if defined(PQC_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) {
    avx2::exp_inplace(x, n);
    return;
  }
#endif
  scalar::exp_inplace<float>(x, n);
}

void exp_inplace(double* x, std::size_t n) { scalar::exp_inplace<double>(x, n); }

void softmax_rows(const float* in, float* out, std::size_t rows,
                  std::size_t cols) {
#if defined(PQC_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) {
    avx2::softmax_rows(in, out, rows, cols);
    return;
  }
#endif
  scalar::softmax_rows<float>(in, out, rows, cols);
}

void softmax_rows(const double* in, double* out, std::size_t rows,
                  std::size_t cols) {
  scalar::softmax_rows<double>(in, out, rows, cols);
}

}  // namespace pqc::simd
