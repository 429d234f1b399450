#ifndef SHAPEGRASP_PARALLEL_HPP
#define SHAPEGRASP_PARALLEL_HPP

#include "shapegrasp/common.hpp"

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace shapegrasp {

namespace detail {
// Set on pool threads so nested loops run inline instead of oversubscribing.
inline thread_local bool in_parallel_region = false;
}  // namespace detail

// Static block partition of [0, n). `body(begin, end)` must only write to
// per-index outputs so the result is independent of the worker count.
template <typename Body>
void parallel_blocks(std::size_t n, Body&& body) {
  const std::size_t jobs =
      detail::in_parallel_region
          ? 1
          : std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (jobs <= 1) {
    if (n > 0) body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(jobs);
  const std::size_t chunk = (n + jobs - 1) / jobs;
  for (std::size_t t = 0; t < jobs; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, t, begin, end] {
      detail::in_parallel_region = true;
      try {
        body(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  parallel_blocks(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) body(i);
  });
}

}  // namespace shapegrasp

#endif  // SHAPEGRASP_PARALLEL_HPP
