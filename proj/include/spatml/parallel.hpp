#ifndef SPATML_PARALLEL_HPP
#define SPATML_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace spatml {

/* Run body(i) for i in [0, count) on up to `workers` threads.  Each index
 * writes into its own result slot, so outputs are identical for any worker
 * count; scheduling is by atomic counter.  workers == 1 runs inline.
 * Exceptions from the body are captured and rethrown (first index wins). */
void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t)>& body);

unsigned default_workers();

}  // namespace spatml

#endif  // SPATML_PARALLEL_HPP
