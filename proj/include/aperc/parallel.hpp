#ifndef APERC_PARALLEL_HPP
#define APERC_PARALLEL_HPP

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace aperc {

/// Runs fn(i) for i in [0, count) on a fixed pool of worker threads.
///
/// Index i always goes to the same worker for a given thread count, and
/// callers write results into slot i, so reductions done afterwards in
/// index order are independent of scheduling.
template <typename Fn>
void parallel_for(std::int64_t count, Fn&& fn, unsigned threads = 0)
{
    if (count <= 0)
        return;
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::int64_t>(threads, count));
    if (threads == 1) {
        for (std::int64_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::int64_t i = t; i < count; i += threads)
                    fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace aperc

#endif // APERC_PARALLEL_HPP
