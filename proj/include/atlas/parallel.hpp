#pragma once

#include <cstddef>
#include <functional>

namespace atlas {

/// Worker cap: ATLAS_CAE_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
int thread_count();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so callers that write only slot i get results independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace atlas
