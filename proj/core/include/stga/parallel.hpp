#pragma once

#include <cstddef>
#include <functional>

namespace stga {

/// Worker count used by parallel_for. Defaults to STGA_THREADS or the
/// hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n). Items must write disjoint outputs; callers
/// that reduce do so afterwards in index order, so results never depend on
/// the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace stga
