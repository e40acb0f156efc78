#include "pln/parallel.hpp"

#include <atomic>

namespace pln {
namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int threads) { g_threads.store(threads < 0 ? 0 : threads); }

int thread_count() { return g_threads.load(); }

}  // namespace pln
