#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace nvlimit {

/// Splits [0, n) into `workers` contiguous blocks and runs fn(begin, end, worker)
/// on each. Block boundaries depend only on (n, workers), so per-worker partial
/// results merged in worker order are reproducible. The first exception thrown
/// by any block is rethrown on the calling thread.
template <class Fn>
void parallel_blocks(std::size_t n, int workers, Fn&& fn)
{
    workers = std::max(1, workers);
    if (workers == 1 || n < 2) {
        fn(std::size_t{0}, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::size_t b = std::min(n, w * chunk), e = std::min(n, b + chunk);
        pool.emplace_back([&, b, e, w] {
            try {
                fn(b, e, w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace nvlimit
