#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splatreorg {

// Property suites over built-in synthetic scenes. Thresholds are fixed
// constants; the seed offsets the built-in base seeds (0 = canonical).

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;        // headline measured quantity
  std::string details;
  double elapsed_ms = 0.0;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  bool pass = true;
  void add(CheckResult check) {
    pass = pass && check.pass;
    checks.push_back(std::move(check));
  }
};

SuiteResult run_consistency_suite(std::uint64_t seed);
SuiteResult run_overlap_suite(std::uint64_t seed);
SuiteResult run_deadlock_suite(std::uint64_t seed);

// which: consistency | overlap | deadlock | all.
// Throws std::invalid_argument on an unknown suite name.
std::vector<SuiteResult> run_suites(const std::string& which, std::uint64_t seed);

std::string suites_to_json(const std::vector<SuiteResult>& results);

}  // namespace splatreorg
