#ifndef BAYESHOM_PARALLEL_HPP
#define BAYESHOM_PARALLEL_HPP

#include <functional>

#include "bayeshom/common.hpp"

namespace bayeshom {

/// Worker count used by parallel_for when none is given. 0 means hardware concurrency.
void set_default_threads(int threads);
int default_threads();

/// Runs body(i) for i in [0, count) on a bounded set of worker threads.
/// Iterations must be independent; the first exception thrown is rethrown.
void parallel_for(Index count, const std::function<void(Index)>& body, int threads = -1);

}  // namespace bayeshom

#endif  // BAYESHOM_PARALLEL_HPP
