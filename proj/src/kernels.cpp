#include "rvit/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cstring>
#include <limits>
#include <mutex>

namespace rvit::kernels {
namespace {

std::atomic<Exec> g_exec{Exec::parallel};

constexpr std::size_t kParallelGemmFlops = std::size_t{1} << 20;

// One output row. Shared by both variants so they cannot drift apart.
inline void gemm_row(bool trans_a, bool trans_b, std::size_t i, std::size_t m, std::size_t n,
                     std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::memset(crow, 0, n * sizeof(double));
  if (!trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      if (trans_a) {
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
      } else {
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      }
      crow[j] += acc;
    }
  }
}

}  // namespace

void set_execution(Exec e) { g_exec.store(e); }
Exec execution() { return g_exec.load(); }

int max_threads() { return omp_get_max_threads(); }

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(trans_a, trans_b, i, m, n, k, a, b, c, accumulate);
}

void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                   const double* a, const double* b, double* c, bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i)
    gemm_row(trans_a, trans_b, static_cast<std::size_t>(i), m, n, k, a, b, c, accumulate);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  if (m * n * k >= kParallelGemmFlops && !omp_in_parallel() && execution() == Exec::parallel &&
      omp_get_max_threads() > 1) {
    gemm_parallel(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  } else {
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  }
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  parallel_for(n, body, execution());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, Exec exec) {
  std::exception_ptr first;
  std::size_t first_index = std::numeric_limits<std::size_t>::max();
  std::mutex mu;
  auto guarded = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (i < first_index) {
        first_index = i;
        first = std::current_exception();
      }
    }
  };
  if (exec == Exec::serial || n < 2 || omp_in_parallel()) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) guarded(static_cast<std::size_t>(i));
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace rvit::kernels
