#pragma once

#include <cstddef>
#include <functional>

namespace xing {

/// Worker cap read from XING_THREADS (default 1). Overridable for tests.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs fn(i) for i in [0, n). Each index must write disjoint outputs; any
/// cross-index reduction is done by the caller in index order, so results do
/// not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace xing
