#pragma once

#include <cstdint>

namespace dattn {

// Upper bound on worker threads used inside kernels. 0 = hardware default.
// Kernels parallelize over disjoint output rows with a fixed per-element
// summation order, so results are bit-identical for any thread count.
void set_max_threads(int n);
int max_threads();
int hardware_threads();

// Restores the previous limit on scope exit. Timing code pins threads to 1.
class ThreadLimitGuard {
  public:
    explicit ThreadLimitGuard(int n);
    ~ThreadLimitGuard();
    ThreadLimitGuard(const ThreadLimitGuard&) = delete;
    ThreadLimitGuard& operator=(const ThreadLimitGuard&) = delete;

  private:
    int saved_;
};

namespace detail {
// Thread count to use for a loop with `work_items` independent iterations.
int threads_for(std::int64_t work_items);
} // namespace detail

} // namespace dattn
