#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace va {

// Worker cap for intra-op parallelism. Every parallel loop assigns each
// output element to exactly one worker, so results are bit-identical for
// any thread count.
int max_threads();
void set_max_threads(int n);

template <class F>
void parallel_for(int64_t n, F&& f) {
#ifdef _OPENMP
    const int nt = max_threads();
    if (nt > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) f(i);
}

} // namespace va
