#include "drnets/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace drnets {
namespace {
std::atomic<int> g_override{0};

int env_cap() {
  const char* raw = std::getenv("DRNETS_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    return std::max(1, std::stoi(raw));
  } catch (...) {
    return 0;
  }
}
}  // namespace

int worker_count() {
  if (int o = g_override.load(); o > 0) return o;
#if defined(_OPENMP)
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (int cap = env_cap(); cap > 0) n = std::min(n, cap);
  return std::max(1, n);
}

void set_worker_count(int n) { g_override.store(std::max(0, n)); }

bool in_parallel_region() {
#if defined(_OPENMP)
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

}  // namespace drnets
