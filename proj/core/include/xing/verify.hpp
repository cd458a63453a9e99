#pragma once

#include <functional>
#include <string>
#include <vector>

namespace xing {

struct CheckResult {
  std::string name;
  std::string kind;  // "grad" or "oracle"
  double error = 0;
  double tolerance = 0;
  double seconds = 0;
  std::string detail;  // exception text when the check could not run

  bool passed() const { return error <= tolerance; }
};

/// Gradient checks for every op, block, fusion, both discriminators and the
/// composite generator loss, plus oracle comparisons for the attention path.
std::vector<CheckResult> run_verification(
    const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace xing
