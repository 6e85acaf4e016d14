// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace reflsurf {

/// Number of workers to use for a request of `threads` (<= 0 means all cores).
inline int resolveThreads(int threads) {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Splits [0, count) into `workers` contiguous ranges and runs
/// fn(begin, end, worker) on each. The partition depends only on `count` and
/// `workers`, so per-worker reductions are reproducible.
template <class Fn>
void parallelRanges(std::size_t count, int workers, Fn &&fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        fn(std::size_t{0}, count, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const std::size_t b = count * static_cast<std::size_t>(w) / static_cast<std::size_t>(workers);
        const std::size_t e =
            count * static_cast<std::size_t>(w + 1) / static_cast<std::size_t>(workers);
        pool.emplace_back([&fn, &errors, b, e, w] {
            try {
                fn(b, e, w);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    for (auto &err : errors)
        if (err) std::rethrow_exception(err);
}

} // namespace reflsurf
