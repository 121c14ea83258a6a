#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stacklq {

// Splits [0, n) into contiguous chunks, one worker thread per chunk. Workers
// must write only to their own slots; the first exception wins and is
// rethrown after all threads join.
inline void parallel_over_paths(int n, int threads, const std::function<void(int, int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const int chunk = (n + threads - 1) / threads;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int t = 0; t < threads; ++t) {
        const int a = t * chunk;
        const int b = std::min(n, a + chunk);
        if (a >= b) break;
        pool.emplace_back([&, a, b] {
            try {
                fn(a, b);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace stacklq
