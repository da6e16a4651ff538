#include <iostream>

#include "pqc/cli.hpp"
#include "pqc/runtime.hpp"

int main(int argc, char** argv) {
  pqc::retain_heap_memory();
  return pqc::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
