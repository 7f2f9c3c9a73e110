#pragma once

#include <cstddef>
#include <functional>
#include <memory>

namespace cwb {

// Runs index-parallel loops on at most `threads` workers. Results must be
// written to per-index slots; callers reduce them in index order so the
// outcome does not depend on the thread count.
class Executor {
 public:
  explicit Executor(int threads = 1);
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  int threads() const { return threads_; }
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

 private:
  struct Arena;
  int threads_;
  std::unique_ptr<Arena> arena_;
};

}  // namespace cwb
