#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace onprox {

// One theorem-bound evaluation on one run.
struct BoundReport {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  double slack = 0.0;      // bound - measured
  double tolerance = 0.0;  // passed <=> measured <= bound + tolerance
  bool passed = false;
  // Bounds on expectations are reported per-run with this flag: a single-run
  // "fail" there is not evidence of a bug.
  bool expectation_semantics = false;
  std::map<std::string, double> inputs;
};

namespace cli {

// Full command-line entry point (flags: --config, --preset, --seed, --out,
// --jobs, --verify). Returns the process exit code: 0 success, 1 usage error,
// 2 config-validation or verification failure, 3 capped run, 4 I/O or schema
// error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace cli

}  // namespace onprox
