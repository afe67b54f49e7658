#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace splatreorg {

using Index = Eigen::Index;

// Malformed or unreadable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside a pipeline stage. Carries the stage name so the
// CLI can report where the computation broke.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Number of worker threads used by parallel loops. Reads REORG_THREADS once;
// unset or values < 1 fall back to the hardware concurrency.
int thread_budget();

namespace detail {
// Runs chunk(begin, end) over a static partition of [0, n). Rethrows the
// first worker exception.
void run_chunked(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk);
}  // namespace detail

// Parallel loop over [0, n). fn(i) must only write state owned by index i,
// which keeps results identical to sequential execution for any thread count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  detail::run_chunked(n, [&fn](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace splatreorg
