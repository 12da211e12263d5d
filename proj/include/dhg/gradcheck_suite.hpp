#pragma once

// Gradient checks over every differentiable primitive plus one full DHST
// block (f64, batch norm off), shared by the CLI and the acceptance run.

#include <cstdint>

#include "dhg/gradcheck.hpp"

namespace dhg {

struct GradCheckCase {
  std::string op;
  std::vector<GradCheckResult> results;

  double worst_error() const { return worst(results); }
};

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, bool include_block = true);

}  // namespace dhg
