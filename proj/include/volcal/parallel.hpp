#pragma once
// Minimal deterministic work partitioning.  Bodies write to disjoint per-index
// slots; all reductions happen serially in index order afterwards, so results
// are bitwise identical for every thread count.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace volcal {

// Runs body(i, tid) for i in [0, n) with tid in [0, actual_threads).
// Strided assignment: thread t handles i = t, t + nt, t + 2*nt, ...
inline void par_for(std::size_t n, int threads,
                    const std::function<void(std::size_t, int)>& body) {
    const int nt = static_cast<int>(
        std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1)));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i, 0);
        return;
    }
    std::vector<std::exception_ptr> errs(static_cast<std::size_t>(nt));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = static_cast<std::size_t>(t); i < n;
                     i += static_cast<std::size_t>(nt))
                    body(i, t);
            } catch (...) {
                errs[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

}  // namespace volcal
