#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace mvseg {

// Worker count: hardware concurrency, capped by MVSEG_THREADS when set.
inline unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MVSEG_THREADS")) {
    try {
      long cap = std::stol(env);
      if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (...) {
      // ignore unparsable values
    }
  }
  return n;
}

// Runs fn(i) for i in [begin, end). Iterations must be independent.
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int total = end - begin;
  if (total <= 0) return;
  const int workers = std::min<int>(static_cast<int>(thread_count()), total);
  if (workers <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = begin + w; i < end; i += workers) fn(i);
    });
  }
}

}  // namespace mvseg
