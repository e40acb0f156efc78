#pragma once

#include <Eigen/Dense>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pln {

// Thread count used by the OpenMP kernels. 0 means "library default"
// (all cores). Results are bitwise identical at any setting: independent
// iterations write disjoint outputs, and reductions fold per-row slots
// in row order through fixed-size windows.
void set_thread_count(int threads);
int thread_count();

namespace detail {
inline int resolved_threads() {
#ifdef _OPENMP
  const int requested = thread_count();
  return requested > 0 ? requested : omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace detail

// Number of per-row slots held live by deterministic_reduce; bounds the
// reduction working set independently of n.
inline constexpr Eigen::Index kReduceWindow = 64;

// fn(i) for i in [0, n); iterations must be independent.
template <class F>
void parallel_rows(Eigen::Index n, F&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(detail::resolved_threads())
#endif
  for (Eigen::Index i = 0; i < n; ++i) fn(i);
}

// Ordered reduction: compute(i, slot) fills a per-row slot (in parallel,
// window by window); fold(i, slot) is then applied serially in increasing
// row order, so the accumulation order never depends on thread count.
template <class Slot, class Compute, class Fold>
void deterministic_reduce(Eigen::Index n, std::vector<Slot>& slots,
                          Compute&& compute, Fold&& fold) {
  const Eigen::Index window = static_cast<Eigen::Index>(slots.size());
  for (Eigen::Index base = 0; base < n; base += window) {
    const Eigen::Index len = std::min(window, n - base);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(detail::resolved_threads())
#endif
    for (Eigen::Index w = 0; w < len; ++w) compute(base + w, slots[w]);
    for (Eigen::Index w = 0; w < len; ++w) fold(base + w, slots[w]);
  }
}

}  // namespace pln
