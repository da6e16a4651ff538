#include "pqc/runtime.hpp"

#include <malloc.h>

#include <cstdlib>
#include <string>

namespace pqc {

void retain_heap_memory() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

std::size_t worker_threads() {
  const char* env = std::getenv("PQC_THREADS");
  if (!env || !*env) return 1;
  try {
    const long n = std::stol(env);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace pqc
