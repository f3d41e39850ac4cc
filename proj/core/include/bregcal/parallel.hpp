#pragma once

#include <functional>

namespace bregcal {

/// Worker count: BREGCAL_THREADS when set (>= 1), else hardware concurrency.
int thread_count();

/// Runs fn(0..n-1) across the worker pool. Callers own determinism: write
/// results into per-index slots and reduce sequentially afterwards.
void parallel_for(long n, const std::function<void(long)>& fn);

}  // namespace bregcal
