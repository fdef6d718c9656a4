#pragma once

#include <cstddef>
#include <functional>

namespace hgs {

/// Worker count: HGS_THREADS if set (>= 1), otherwise hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n). Work is handed out dynamically, so bodies must
/// write disjoint outputs; callers reduce per-item results in index order to
/// stay independent of the thread count. Nested calls run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hgs
