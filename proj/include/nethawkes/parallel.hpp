#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nethawkes {

namespace detail {
inline std::atomic<std::size_t>& thread_cap() {
    static std::atomic<std::size_t> cap{1};
    return cap;
}
} // namespace detail

// Upper bound on worker threads used by the engines (default 1).
inline void set_max_threads(std::size_t n) { detail::thread_cap() = std::max<std::size_t>(1, n); }
inline std::size_t max_threads() { return detail::thread_cap(); }

// Runs fn(chunk_begin, chunk_end) over [0, n) in fixed-size chunks.
// Chunk boundaries depend only on n and chunk, never on the thread count, so
// per-chunk partial results combined in chunk order are bit-identical for any cap.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, Fn&& fn) {
    if (n == 0) {
        return;
    }
    chunk = std::max<std::size_t>(1, chunk);
    const std::size_t num_chunks = (n + chunk - 1) / chunk;
    const std::size_t workers = std::min(max_threads(), num_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < num_chunks; ++c) {
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= num_chunks) {
                return;
            }
            try {
                fn(c * chunk, std::min(n, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t i = 1; i < workers; ++i) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace nethawkes
