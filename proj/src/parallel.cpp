#include "viewadapt/parallel.hpp"

#include <atomic>
#include <thread>

namespace va {

namespace {
std::atomic<int> g_threads{0}; // 0 = auto
}

int max_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n > 0) return n;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? int(hc) : 1;
}

void set_max_threads(int n) { g_threads.store(n, std::memory_order_relaxed); }

} // namespace va
