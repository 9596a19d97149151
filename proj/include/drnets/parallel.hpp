#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace drnets {

/// Worker count used by the parallel kernels: omp_get_max_threads(), capped by
/// the DRNETS_THREADS environment variable when set. 1 without OpenMP.
int worker_count();

/// Overrides the worker count (0 restores the environment-derived default).
void set_worker_count(int n);

/// True when called from inside an active parallel region.
bool in_parallel_region();

/// Runs body(i) for i in [0, n). Iterations are distributed over worker_count()
/// threads unless already inside a parallel region, in which case the loop runs
/// serially. Results must be written to per-index slots; any exception is
/// rethrown after the loop (the one from the lowest index wins).
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
  const int threads = in_parallel_region() ? 1 : worker_count();
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
#endif
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  (void)threads;
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Serial counterpart of parallel_for with identical semantics.
template <class Body>
void serial_for(std::size_t n, Body&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace drnets
