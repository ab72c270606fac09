#include "silo/parallel.hpp"

#include <cstdlib>
#include <string>

namespace silo {

std::size_t worker_threads() {
  if (const char* env = std::getenv("SILO_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace silo
