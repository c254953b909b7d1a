#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace fcde {

/// Worker count used when a call passes threads = 0. Defaults to 1.
void set_default_threads(std::size_t n);
std::size_t default_threads();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Iterations are
/// claimed dynamically, so body must not depend on execution order. The first
/// exception thrown by any iteration is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace fcde
