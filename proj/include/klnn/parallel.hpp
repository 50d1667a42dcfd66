#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace klnn {

inline unsigned default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1u : hc;
}

/// Runs body(lo, hi) over a fixed block partition of [0, count).
/// The partition depends only on count, never on the worker count, so callers
/// that write into per-index slots and reduce in index order afterwards get
/// results independent of the number of workers. The first exception thrown
/// by any block (in block order) is rethrown on the calling thread.
inline void parallel_for(std::size_t count,
                         const std::function<void(std::size_t, std::size_t)>& body,
                         unsigned workers = 0) {
    if (count == 0) return;
    if (workers == 0) workers = default_workers();
    const std::size_t nblocks =
        std::min<std::size_t>(count, std::max<std::size_t>(1, workers));
    if (nblocks <= 1) {
        body(0, count);
        return;
    }
    const std::size_t block = (count + nblocks - 1) / nblocks;
    std::vector<std::exception_ptr> errors(nblocks);
    std::vector<std::thread> pool;
    pool.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t lo = b * block;
        const std::size_t hi = std::min(count, lo + block);
        if (lo >= hi) break;
        pool.emplace_back([&, b, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                errors[b] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Streaming mean/variance accumulator (Welford), mergeable so chunked
/// parallel accumulation reduced in chunk order is exactly reproducible.
struct Welford {
    long long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    void merge(const Welford& o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        const double delta = o.mean - mean;
        const double total = static_cast<double>(count) + static_cast<double>(o.count);
        m2 += o.m2 + delta * delta * static_cast<double>(count) *
                         static_cast<double>(o.count) / total;
        mean += delta * static_cast<double>(o.count) / total;
        count += o.count;
    }

    double variance() const {
        return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
    }

    double std_error() const {
        return count > 0 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
    }

    /// Mean of squares, E[x^2] = M2/n + mean^2 with the biased variance.
    double second_moment() const {
        return count > 0 ? m2 / static_cast<double>(count) + mean * mean : 0.0;
    }
};

}  // namespace klnn
