#pragma once

// Self-check suites behind `labprod verify`.

#include <string>
#include <vector>

#include "labprod/simulator.hpp"

namespace labprod {

struct VerifyCheck {
  std::string suite;
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

const std::vector<std::string>& verify_suites();

/// Runs one suite ("closed-form", "balance", "roundtrip") or "all". Throws
/// PreconditionError for an unknown name.
std::vector<VerifyCheck> run_verify_suite(const std::string& suite);

/// Reference chain: 20 levels, dc = 1, 2000 workers, 10^7 proposals.
/// `binding` selects a linear-ramp limiter whose capacity binds at the top
/// levels; otherwise the limiter is unbounded.
struct ReferenceChain {
  SimConfig config;
  TargetTotals totals;
};

ReferenceChain reference_chain(bool binding, std::uint64_t steps = 10'000'000);

}  // namespace labprod
