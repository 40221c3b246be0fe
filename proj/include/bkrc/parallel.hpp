#pragma once

// Static-partition parallel loop over an index range. //

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace bkrc {

/// Call fn(k) for every k in [0, n) using up to `threads` workers.
/// Each worker owns a contiguous block, so the writes of fn must be indexed by k.
/// The first exception thrown by any worker (lowest block wins) is rethrown after join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn)
{
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }

    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        workers.reserve(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            const std::size_t begin = n * w / threads;
            const std::size_t end = n * (w + 1) / threads;
            workers.emplace_back([&, w, begin, end] {
                try {
                    for (std::size_t k = begin; k < end; ++k) fn(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Worker count resolved from a user setting where 0 means "all hardware threads".
inline std::size_t resolve_threads(std::size_t requested)
{
    if (requested > 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace bkrc
