#ifndef FINTOR_PARALLEL_HPP
#define FINTOR_PARALLEL_HPP

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fintor {

// Execution policy for the data-parallel sweeps (grid points, seeds,
// verification tuples). Every parallel loop writes to a slot indexed by the
// loop variable and reductions run serially afterwards, so results are
// independent of the thread count. The serial path is the reference
// implementation the tests compare against.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

template <typename Fn>
void parallel_for(std::ptrdiff_t n, Exec exec, Fn&& fn) {
    if (exec == Exec::serial) {
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#else
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#endif
}

} // namespace fintor

#endif
