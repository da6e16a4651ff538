#pragma once

// The `pqc` command line: synth, preprocess, split, sample, train, eval and
// experiment. Exit codes: 0 success, 1 usage error, 2 data error.

#include <iosfwd>
#include <string>
#include <vector>

namespace pqc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// args excludes the program name. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pqc::cli
