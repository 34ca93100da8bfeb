#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ngp {

inline int hardware_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

inline int resolve_threads(int requested) {
    return requested > 0 ? requested : hardware_threads();
}

// Static partition of [0, n) into at most `threads` contiguous chunks.
// fn(chunk_index, begin, end). The partition depends only on (n, threads),
// so per-chunk results can be merged in chunk order for deterministic sums.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
    threads = std::max(1, threads);
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(n, 1));
    if (chunks <= 1 || n == 0) {
        fn(0, std::size_t(0), n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(chunks - 1);
    std::vector<std::exception_ptr> errors(chunks);
    const std::size_t base = n / chunks, rem = n % chunks;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t end = begin + base + (c < rem ? 1 : 0);
        auto run = [&fn, &errors, c, begin, end] {
            try {
                fn(c, begin, end);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        };
        if (c + 1 == chunks) {
            run();
        } else {
            pool.emplace_back(run);
        }
        begin = end;
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// Convenience: fn(index) over [0, n), statically partitioned.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    parallel_chunks(n, threads, [&fn](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    });
}

}  // namespace ngp
