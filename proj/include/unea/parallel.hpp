#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace unea {

// Splits [0, count) into `workers` contiguous chunks and runs fn(worker, begin, end)
// for each. Chunk boundaries depend only on count and workers, so per-worker results
// merged in worker order are reproducible. workers <= 1 runs inline.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers <= 1) {
    fn(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = count * w / workers;
      const std::size_t end = count * (w + 1) / workers;
      threads.emplace_back([&, w, begin, end] {
        try {
          fn(w, begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace unea
