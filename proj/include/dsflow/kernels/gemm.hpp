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

#pragma once

#include <cstddef>

namespace dsflow::kernels {

enum class Trans { kNo, kYes };

// C (m x n) += op(A) * op(B), where op(A) is m x k and op(B) is k x n.
// lda/ldb are the row strides of A and B as stored.
//
// Every variant accumulates each C(i, j) over p = 0..k-1 in ascending order,
// so results are bitwise identical across variants and thread counts.

void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c);

void gemm_omp(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
              const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c);

/// Dispatches to gemm_omp above a work threshold, gemm_serial otherwise.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c);

/// Work (m*n*k) above which gemm() goes parallel.
inline constexpr std::size_t kParallelGemmWork = std::size_t{1} << 18;

/// Number of OpenMP threads available, 1 without OpenMP.
int max_threads();

}  // namespace dsflow::kernels
