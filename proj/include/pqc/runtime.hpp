#pragma once

#include <cstddef>

namespace pqc {

// Keeps freed heap memory with the process instead of returning large blocks
// to the kernel. Training allocates and drops tens of megabytes of
// activations per step; without this every step pays fresh page faults.
void retain_heap_memory();

// Worker cap from PQC_THREADS (default 1, at least 1).
std::size_t worker_threads();

}  // namespace pqc
