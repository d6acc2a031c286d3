#pragma once

#include <cstddef>
#include <functional>

namespace matchmarket {

/// Worker count: hardware concurrency, capped by MATCHMARKET_THREADS when set.
std::size_t worker_count() noexcept;

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Exceptions
/// thrown by body are rethrown (first one wins) after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace matchmarket
