#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace solrepair {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
  bool timed_out = false;
  /// exec failed (binary missing or not executable)
  bool spawn_failed = false;
  std::chrono::milliseconds elapsed{0};
};

/// Runs argv[0] (PATH lookup) with `input` on stdin, capturing both output
/// streams. The child is killed once `timeout` passes.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          std::chrono::milliseconds timeout);

/// Absolute path of an executable on PATH, or empty.
std::string find_executable(const std::string& name);

}  // namespace solrepair
