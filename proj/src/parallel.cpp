#include "fbsdej/parallel.hpp"

#include <cstdlib>
#include <string>

namespace fbsdej {

namespace {
std::atomic<int> g_thread_override{0};
}

int thread_count() {
  if (const int forced = g_thread_override.load(); forced > 0) return forced;
  if (const char* env = std::getenv("FBSDEJ_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_thread_count(int threads) { g_thread_override.store(threads > 0 ? threads : 0); }

}  // namespace fbsdej
