#include "dattn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dattn {

namespace {
std::atomic<int> g_max_threads{0}; // 0 = hardware default
}

int hardware_threads() {
#ifdef _OPENMP
    return std::max(1, omp_get_max_threads());
#else
    return std::max(1u, std::thread::hardware_concurrency());
#endif
}

void set_max_threads(int n) {
    g_max_threads.store(n < 0 ? 0 : n);
}

int max_threads() {
    const int n = g_max_threads.load();
    return n == 0 ? hardware_threads() : n;
}

ThreadLimitGuard::ThreadLimitGuard(int n) : saved_(g_max_threads.load()) {
    set_max_threads(n);
}

ThreadLimitGuard::~ThreadLimitGuard() {
    g_max_threads.store(saved_);
}

namespace detail {

int threads_for(std::int64_t work_items) {
    if (work_items <= 1) return 1;
    const std::int64_t limit = std::min<std::int64_t>(max_threads(), work_items);
    return static_cast<int>(std::max<std::int64_t>(1, limit));
}

} // namespace detail
} // namespace dattn
