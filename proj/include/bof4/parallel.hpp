#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace bof4 {

// Worker count: BOF4_THREADS overrides, otherwise hardware concurrency.
inline unsigned thread_count() {
    if (const char* env = std::getenv("BOF4_THREADS")) {
        long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(std::min<long>(n, 512));
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1u : hc;
}

// Run fn(begin, end, chunk_index) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on (n, grain), never on the worker count, so
// any per-chunk results combined in chunk order are bit-reproducible.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t grain, Fn&& fn) {
    if (n == 0) return;
    grain = std::max<std::size_t>(grain, 1);
    const std::size_t chunks = (n + grain - 1) / grain;
    const unsigned workers = std::min<std::size_t>(thread_count(), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            fn(c * grain, std::min(n, (c + 1) * grain), c);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < chunks; c += workers) {
                fn(c * grain, std::min(n, (c + 1) * grain), c);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace bof4
