#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace reshuffle {

/// Executes independent work items on a fixed number of threads.
///
/// Owned by the caller (normally the CLI). Library routines accept a
/// `const Parallel&` and only ever write per-index results, so output does
/// not depend on the thread count.
class Parallel {
public:
    Parallel() = default;
    explicit Parallel(unsigned threads) : threads_(std::max(1u, threads)) {}

    unsigned threads() const noexcept { return threads_; }

    /// Calls fn(i) for every i in [0, count). The first exception thrown by
    /// any item is rethrown after all workers have stopped.
    template <class Fn>
    void for_each(std::size_t count, Fn&& fn) const {
        if (count == 0) return;
        const std::size_t workers = std::min<std::size_t>(threads_, count);
        if (workers <= 1) {
            for (std::size_t i = 0; i < count; ++i) fn(i);
            return;
        }

        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::exception_ptr error;
        std::mutex error_mutex;

        auto worker = [&] {
            for (;;) {
                if (failed.load(std::memory_order_relaxed)) return;
                const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                }
            }
        };

        {
            std::vector<std::jthread> pool;
            pool.reserve(workers - 1);
            for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
            worker();
        }
        if (error) std::rethrow_exception(error);
    }

private:
    unsigned threads_ = 1;
};

inline const Parallel& serial() {
    static const Parallel instance{1};
    return instance;
}

} // namespace reshuffle
