#ifndef DYNBPS_PARALLEL_HPP
#define DYNBPS_PARALLEL_HPP

#include <cstdlib>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dynbps/common.hpp"

namespace dynbps {

/// Thread count to use when a caller passes `requested <= 0`: the
/// DYNBPS_THREADS environment variable if set, otherwise all cores.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DYNBPS_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
#ifdef _OPENMP
  return omp_get_num_procs();
#else
  return 1;
#endif
}

/// Runs body(i) for i in [0, count). Every task writes only its own slot, so
/// results do not depend on the schedule. If any task throws, the exception
/// from the lowest index is rethrown after the loop.
template <typename Body>
void parallel_for(Index count, int threads, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt) if (nt > 1 && count > 1)
  for (Index i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dynbps

#endif  // DYNBPS_PARALLEL_HPP
