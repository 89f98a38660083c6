#include "qmt/parallel.hpp"

#include <algorithm>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qmt {

int worker_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
  if (const char* env = std::getenv("QMT_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
#else
  return 1;
#endif
}

namespace detail {

void run_parallel(std::int64_t n, void (*trampoline)(void*, std::int64_t), void* ctx) {
#ifdef _OPENMP
  const int threads = worker_threads();
  if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) trampoline(ctx, i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) trampoline(ctx, i);
}

}  // namespace detail

}  // namespace qmt
