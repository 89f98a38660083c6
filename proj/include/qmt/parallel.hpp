#pragma once

#include <cstdint>
#include <type_traits>

namespace qmt {

// Number of worker threads: min(omp_get_max_threads(), QMT_THREADS).
// QMT_THREADS unset or invalid leaves the OpenMP default.
int worker_threads();

// Parallel loop over [0, n). Each index is computed by exactly one thread
// and the loop body must not share mutable state across indices, so results
// are bit-identical for any thread count. Falls back to a plain loop when
// built without OpenMP.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn);

namespace detail {
void run_parallel(std::int64_t n, void (*trampoline)(void*, std::int64_t), void* ctx);
}

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  using F = std::remove_reference_t<Fn>;
  auto trampoline = [](void* ctx, std::int64_t i) { (*static_cast<F*>(ctx))(i); };
  detail::run_parallel(n, trampoline, const_cast<void*>(static_cast<const void*>(&fn)));
}

}  // namespace qmt
