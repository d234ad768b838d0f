#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fibm {

// Thread count resolution: FIBM_THREADS env var wins, otherwise a small
// hardware-based default. Value 1 means fully serial execution.
int thread_count();

// Chunked parallel loop over [0, n). Work items must write to disjoint
// slots; the chunk split is deterministic so results never depend on the
// thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

template <typename F>
void for_each_index(std::int64_t n, F&& f) {
  parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) f(i);
  });
}

}  // namespace fibm
