// Copyright 2026 The dsflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dsflow/kernels/gemm.hpp"

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dsflow::kernels {
namespace {

// One output row. The p loop is outermost so B rows stream contiguously in
// the no-transpose case; each c[j] still sums p in ascending order.
inline void gemm_row(Trans ta, Trans tb, std::size_t i, std::size_t n, std::size_t k,
                     const double* a, std::size_t lda, const double* b, std::size_t ldb,
                     double* c) {
  double* crow = c + i * n;
  if (tb == Trans::kNo) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ta == Trans::kNo ? a[i * lda + p] : a[p * lda + i];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double* bcol = b + j * ldb;
      double acc = crow[j];
      if (ta == Trans::kNo) {
        const double* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bcol[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) acc += a[p * lda + i] * bcol[p];
      }
      crow[j] = acc;
    }
  }
}

}  // namespace

void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(ta, tb, i, n, k, a, lda, b, ldb, c);
}

void gemm_omp(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
              std::size_t lda, const double* b, std::size_t ldb, double* c) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    gemm_row(ta, tb, static_cast<std::size_t>(i), n, k, a, lda, b, ldb, c);
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c) {
  if (m > 1 && m * n * k >= kParallelGemmWork && max_threads() > 1) {
    gemm_omp(ta, tb, m, n, k, a, lda, b, ldb, c);
  } else {
    gemm_serial(ta, tb, m, n, k, a, lda, b, ldb, c);
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dsflow::kernels
