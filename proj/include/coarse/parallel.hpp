#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace coarse {

// All data-parallel loops run over fixed-size blocks. Partial results are
// stored per block and combined in block order, so output is identical for
// any thread count.
inline constexpr int64_t kParallelBlock = 16384;

inline int64_t block_count(int64_t n) {
    return (n + kParallelBlock - 1) / kParallelBlock;
}

// fn(block_index, begin, end); blocks may run on any thread.
inline void parallel_blocks(int64_t n, int threads,
                            const std::function<void(int64_t, int64_t, int64_t)>& fn) {
    const int64_t blocks = block_count(n);
    if (blocks == 0) return;
    if (threads <= 1 || blocks == 1) {
        for (int64_t b = 0; b < blocks; ++b) {
            const int64_t begin = b * kParallelBlock;
            fn(b, begin, std::min(begin + kParallelBlock, n));
        }
        return;
    }
    std::atomic<int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const int64_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= blocks) return;
            const int64_t begin = b * kParallelBlock;
            fn(b, begin, std::min(begin + kParallelBlock, n));
        }
    };
    const int nthreads = static_cast<int>(std::min<int64_t>(threads, blocks));
    std::vector<std::thread> pool;
    pool.reserve(nthreads - 1);
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

// Deterministic parallel sum: per-block partials added in block order.
inline double parallel_sum(int64_t n, int threads,
                           const std::function<double(int64_t, int64_t)>& range_sum) {
    std::vector<double> partial(static_cast<size_t>(block_count(n)), 0.0);
    parallel_blocks(n, threads, [&](int64_t b, int64_t begin, int64_t end) {
        partial[static_cast<size_t>(b)] = range_sum(begin, end);
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

// Run independent jobs on a small worker pool; results keyed by job index.
inline void parallel_jobs(int64_t n_jobs, int threads,
                          const std::function<void(int64_t)>& job) {
    if (n_jobs == 0) return;
    if (threads <= 1 || n_jobs == 1) {
        for (int64_t j = 0; j < n_jobs; ++j) job(j);
        return;
    }
    std::atomic<int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const int64_t j = next.fetch_add(1, std::memory_order_relaxed);
            if (j >= n_jobs) return;
            job(j);
        }
    };
    const int nthreads = static_cast<int>(std::min<int64_t>(threads, n_jobs));
    std::vector<std::thread> pool;
    pool.reserve(nthreads - 1);
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

}  // namespace coarse
