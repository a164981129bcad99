#include "gemm.hpp"

#ifdef HLDET_WITH_OPENBLAS
#include <cblas.h>
#endif

namespace hldet::ad::detail {

#ifdef HLDET_WITH_OPENBLAS

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

#else

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  auto at = [&](std::size_t i, std::size_t p) {
    return trans_a ? a[p * lda + i] : a[i * lda + p];
  };
  auto bt = [&](std::size_t p, std::size_t j) {
    return trans_b ? b[j * ldb + p] : b[p * ldb + j];
  };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
    }
  }
}

#endif

}  // namespace hldet::ad::detail
