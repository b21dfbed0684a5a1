#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "dualrail/errors.hpp"

// Deterministic work sharding. Chunk boundaries depend only on (total,
// chunk_size); the thread count decides who runs a chunk, never what the
// chunk contains, so results that are combined per-chunk in index order are
// identical for any thread count.

namespace dualrail {

inline int default_thread_count() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(std::min(hc, 16u));
}

// fn(chunk_index, begin, end) with [begin, end) a half-open index range.
inline void parallel_chunks(
    std::int64_t total, std::int64_t chunk_size,
    const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn,
    int threads = 1) {
    if (total < 0 || chunk_size <= 0)
        throw ValidationError("parallel_chunks: bad range");
    if (total == 0) return;
    const std::int64_t n_chunks = (total + chunk_size - 1) / chunk_size;

    auto run_chunk = [&](std::int64_t c) {
        const std::int64_t begin = c * chunk_size;
        const std::int64_t end = std::min(total, begin + chunk_size);
        fn(c, begin, end);
    };

    if (threads <= 1 || n_chunks == 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c) run_chunk(c);
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&]() {
        while (true) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks || failed.load()) return;
            try {
                run_chunk(c);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<std::int64_t>(threads, n_chunks);
    pool.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace dualrail
