#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace enk {

// Worker cap from ENK_THREADS. Unset, 0, or 1 means single-threaded; the
// value is read once per process.
inline unsigned thread_cap() {
    static const unsigned cap = [] {
        const char* env = std::getenv("ENK_THREADS");
        long v = env ? std::strtol(env, nullptr, 10) : 0;
        if (v < 1) v = 1;
        return static_cast<unsigned>(v);
    }();
    return cap;
}

// Runs f(i) for i in [0, n). Work is split into contiguous ranges so each
// worker touches a disjoint index set; callers must only write to slots
// owned by their index. Reductions over the results stay with the caller,
// in index order, which keeps outputs independent of the thread count.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    const unsigned cap = thread_cap();
    if (cap <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(cap, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex error_mu;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = n * w / workers;
        const std::size_t hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) f(i);
            } catch (...) {
                std::scoped_lock lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace enk
