#pragma once

#include <cstddef>
#include <functional>

namespace lpiqa {

/// Worker count for parallel_for. Defaults to LPIQA_THREADS or the hardware
/// concurrency. Results never depend on this value.
int thread_count();
void set_thread_count(int n);

/// Calls fn(i) for i in [0, n) over contiguous blocks on up to thread_count()
/// threads. The first exception thrown is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lpiqa
