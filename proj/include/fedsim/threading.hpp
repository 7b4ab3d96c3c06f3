#pragma once

#include <cstddef>
#include <functional>

namespace fedsim {

/// Worker-thread count: FEDSIM_THREADS when set, hardware concurrency
/// otherwise (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, count). Tasks must be independent and write only
/// to their own slots; results then do not depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace fedsim
