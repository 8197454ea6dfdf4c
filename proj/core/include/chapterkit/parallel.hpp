#pragma once

#include <exception>
#include <thread>
#include <vector>

namespace chapterkit {

// Runs fn(i) for i in [0, n) across up to `jobs` threads in contiguous
// chunks. Callers are responsible for making fn(i) independent; outputs
// indexed by i keep results deterministic regardless of thread count.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
  if (n == 0) return;
  size_t workers = jobs > 1 ? std::min<size_t>(static_cast<size_t>(jobs), n) : 1;
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    size_t begin = w * chunk;
    size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, &errors, w, begin, end] {
      try {
        for (size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace chapterkit
