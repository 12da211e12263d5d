#pragma once

// Central-difference gradient checking in f64. Only the forward path is used
// to form the numeric estimate, so it is independent of every backward
// closure it checks.

#include <functional>
#include <string>
#include <vector>

#include "dhg/autograd.hpp"

namespace dhg {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t elements = 0;
};

// max |a - n| / max(max |a|, max |n|) over one tensor; 0 when both vanish.
double relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric);

using LossFn = std::function<Var<double>(Tape<double>&)>;

// Compares backward() against (f(p + h) - f(p - h)) / 2h for every element
// of every listed parameter. Inputs to be checked are passed as parameters.
std::vector<GradCheckResult> gradcheck(const LossFn& loss, const std::vector<Parameter<double>*>& params,
                                       double h = 1e-6);

double worst(const std::vector<GradCheckResult>& results);

}  // namespace dhg
