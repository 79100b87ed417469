#include "lpiqa/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lpiqa {

namespace {

int default_threads() {
    if (const char* env = std::getenv("LPIQA_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int>& threads_setting() {
    static std::atomic<int> n{default_threads()};
    return n;
}

}  // namespace

int thread_count() { return threads_setting().load(); }

void set_thread_count(int n) { threads_setting().store(std::max(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(thread_count()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run_block = [&](std::size_t w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        try {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run_block, w);
    run_block(0);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace lpiqa
