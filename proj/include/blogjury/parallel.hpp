#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace blogjury {

/// Runs fn(i) for i in [0, n) on at most `max_in_flight` threads. Each index
/// is visited exactly once; callers write results into slot i so the output
/// order never depends on completion order. The first exception thrown by fn
/// is rethrown after all workers have joined.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t max_in_flight, Fn&& fn)
{
    if (n == 0) return;
    std::size_t const workers = std::clamp<std::size_t>(max_in_flight, 1, n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace blogjury
