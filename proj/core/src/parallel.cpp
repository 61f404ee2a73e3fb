#include "qreg/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace qreg {

namespace {

std::atomic<std::size_t> g_override{0};

std::size_t from_environment() {
  if (const char* env = std::getenv("QREG_NUM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace

std::size_t thread_count() {
  const std::size_t o = g_override.load(std::memory_order_relaxed);
  return o != 0 ? o : from_environment();
}

void set_thread_count(std::size_t n) { g_override.store(n, std::memory_order_relaxed); }

}  // namespace qreg
