#pragma once

#include <cstddef>
#include <functional>

namespace rse {

/// Runs body(i) for i in [0, count) on up to `threads` workers with a static partition.
/// Each index is handled exactly once; callers write results into per-index slots so the
/// outcome does not depend on the worker count. Exceptions are rethrown (lowest index first).
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

/// 0 means "all hardware threads".
[[nodiscard]] std::size_t resolve_threads(std::size_t requested);

} // namespace rse
