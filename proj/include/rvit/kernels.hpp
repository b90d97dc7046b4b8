#pragma once

// Dense kernels with a serial reference and an OpenMP variant. Both variants
// evaluate every output element with the same sequence of floating-point
// operations, so their results are bit-identical; the serial path is kept for
// tests and as the fallback inside already-parallel regions.

#include <cstddef>
#include <exception>
#include <functional>

namespace rvit::kernels {

enum class Exec { serial, parallel };

/// Process-wide default for batch-level loops (images, examples).
void set_execution(Exec e);
Exec execution();

/// C[m x n] = op(A) * op(B), or += when accumulate is set.
/// op(A) is m x k (A stored k x m when trans_a), op(B) is k x n (B stored n x k when trans_b).
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool accumulate);
void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                   const double* a, const double* b, double* c, bool accumulate);

/// Dispatches to the OpenMP variant for large products outside parallel regions.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs.
/// The first exception (lowest index) is rethrown after the loop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, Exec exec);

int max_threads();

}  // namespace rvit::kernels
