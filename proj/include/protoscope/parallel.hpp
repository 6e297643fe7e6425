#pragma once

#include <cstddef>
#include <functional>

namespace protoscope {

/// Worker count: explicit request if > 0, else the PROTOSCOPE_THREADS
/// environment variable, else hardware concurrency. Always >= 1.
std::size_t resolve_threads(std::size_t requested = 0);

/// Runs fn(i) for every i in [0, count) on up to `threads` workers.
/// Items must be independent; the first exception thrown by any item is
/// rethrown on the calling thread after all workers finish.
void parallel_for_index(std::size_t count, std::size_t threads,
                        const std::function<void(std::size_t)>& fn);

}  // namespace protoscope
