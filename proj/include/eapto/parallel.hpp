#pragma once

#include "eapto/core.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace eapto {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

/// Worker cap for element loops. Results never depend on it: workers fill
/// disjoint slots and reductions run serially in element order.
inline void set_threads(int n) { detail::thread_setting().store(std::max(1, n)); }
inline int threads() { return detail::thread_setting().load(); }

/// Calls body(i) for i in [begin, end) across up to threads() workers. The
/// exception thrown for the smallest index is rethrown.
template <class Body>
void parallel_for(Index begin, Index end, Body&& body) {
  const Index n = end - begin;
  const int workers = static_cast<int>(std::min<Index>(threads(), std::max<Index>(n, 1)));
  if (workers <= 1) {
    for (Index i = begin; i < end; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<Index> error_at(static_cast<std::size_t>(workers), end);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        const Index lo = begin + n * w / workers, hi = begin + n * (w + 1) / workers;
        for (Index i = lo; i < hi; ++i) {
          try {
            body(i);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
            error_at[static_cast<std::size_t>(w)] = i;
            return;
          }
        }
      });
    }
  }
  const auto first = std::min_element(error_at.begin(), error_at.end());
  if (*first < end) std::rethrow_exception(errors[static_cast<std::size_t>(first - error_at.begin())]);
}

}  // namespace eapto
