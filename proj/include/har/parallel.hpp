#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace har {

/// Number of contiguous chunks `n` items are split into for `threads` workers.
inline std::size_t chunk_count(std::size_t n, std::size_t threads) {
  return std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(1, threads)));
}

/// Calls fn(chunk, begin, end) for each of chunk_count(n, threads) contiguous
/// ranges, one thread per chunk. The partition depends only on n and
/// threads. The first exception thrown by any chunk is rethrown.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t chunks = chunk_count(n, threads);
  auto bounds = [&](std::size_t c) { return n * c / chunks; };
  if (chunks == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> workers;
  for (std::size_t c = 1; c < chunks; ++c) {
    workers.emplace_back([&, c] {
      try {
        fn(c, bounds(c), bounds(c + 1));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  try {
    fn(std::size_t{0}, bounds(0), bounds(1));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace har
