// Static-partition parallel for. Each index is processed exactly once and
// writes only its own outputs, so results do not depend on the thread count.
#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace hmfg {

inline int& worker_count() {
  static int n = static_cast<int>(std::thread::hardware_concurrency());
  return n;
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int workers = worker_count() > 0 ? worker_count() : 1;
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t nthreads = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += nthreads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace hmfg
