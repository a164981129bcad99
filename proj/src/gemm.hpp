#pragma once

#include <cstddef>

namespace hldet::ad::detail {

// Row-major C[m x n] = alpha * op(A) * op(B) + beta * C.
// op(A) is A[m x k] or, when trans_a, the transpose of A[k x m].
// Backed by OpenBLAS when available; the fallback is a plain loop nest.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);

}  // namespace hldet::ad::detail
