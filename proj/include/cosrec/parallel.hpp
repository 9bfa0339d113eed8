#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace cosrec {

// Runs fn(begin, end, worker) over contiguous chunks. With threads <= 1 the
// call runs inline; workers own disjoint ranges so merges stay ordered.
template <typename F>
void parallel_chunks(std::size_t total, std::size_t threads, F&& fn) {
  if (threads <= 1 || total <= 1) {
    fn(std::size_t{0}, total, std::size_t{0});
    return;
  }
  const std::size_t workers = std::min(threads, total);
  const std::size_t chunk = (total + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(begin + chunk, total);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace cosrec
