#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace difform {

// Worker cap: DIFFORM_THREADS env var; 0 or unset means hardware concurrency.
int worker_count();

// Runs fn(begin, end) over [0,n) split into fixed 4096-element blocks handed
// out to workers. Output ranges are disjoint, so results never depend on the
// thread count or schedule.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

// Deterministic sum: each fixed block produces one partial (accumulated
// serially inside the block), partials are then summed in block order on one
// thread. Bit-identical for any worker count.
double parallel_sum(int64_t n, const std::function<double(int64_t)>& term);

}  // namespace difform
