#pragma once

#include <cstddef>
#include <functional>

namespace hypflow {

/// Worker count for node-parallel loops. Read once from HYPFLOW_THREADS
/// (default 1). Results never depend on this value.
int thread_count();

/// Overrides the worker count (0 restores the environment default).
void set_thread_count(int n);

/// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; bodies must only write to per-index outputs.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace hypflow
