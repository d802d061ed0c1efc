#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace attnpool {

struct CheckResult {
  std::string group;  // equivalence, gradients, sketch, cost, formats
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  // Scratch space for the file-format checks; a fresh subdirectory of the
  // system temp directory when empty.
  std::filesystem::path scratch_dir;
  std::ostream* log = nullptr;  // one line per check as it completes
  bool wallclock = true;        // include the timing-ratio check
};

struct SelftestReport {
  std::vector<CheckResult> checks;

  bool group_ok(std::string_view group) const;
  bool ok() const;
  // "EQUIVALENCE OK / GRADIENTS OK / SKETCH OK"; FAIL replaces OK per group.
  std::string summary_line() const;
  // "COST OK / FORMATS OK"
  std::string secondary_line() const;
};

// Algebraic equivalences, gradient checks, sketch statistics, FLOP
// accounting and file-format determinism, all on seeded random instances.
SelftestReport run_selftest(const SelftestOptions& options = {});

}  // namespace attnpool
