// SPDX-License-Identifier: Apache-2.0
//
// Fixed-size verification suites behind `gsn-shaper verify`. Each suite
// returns one row per check; a suite passes iff every row does.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gsn {

struct CheckResult {
  std::string check;
  std::string value;
  std::string tolerance;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool passed() const;
};

/// theorem1, corollary2, theorem3, vfe-bound, gradcheck, deviance, walkback.
const std::vector<std::string>& suite_names();

/// Throws InvalidArgument for an unknown suite.
SuiteReport run_suite(std::string_view name, std::uint64_t seed);

/// Columns: check, value, tolerance, pass.
void write_report_csv(const std::filesystem::path& path, const SuiteReport& report);

}  // namespace gsn
