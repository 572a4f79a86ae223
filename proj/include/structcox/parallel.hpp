#pragma once

#include <cstddef>
#include <functional>

namespace structcox {

/// Number of hardware threads, at least 1.
int default_threads();

/// Calls body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written by index. The first exception thrown by any task is rethrown
/// after all workers finish.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

} // namespace structcox
