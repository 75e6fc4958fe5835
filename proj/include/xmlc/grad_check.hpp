#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xmlc/autodiff.hpp"

namespace xmlc {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // At a ReLU kink the central difference straddles two linear pieces; when
  // set, a coordinate that fails centrally may pass on a one-sided difference.
  bool kink_tolerant = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t one_sided = 0;
  std::string worst;  // "input[k] coord c"
  bool passed = false;
};

// Builds a scalar from differentiable leaves on the given tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares the tape's analytic gradient of `fn` w.r.t. every element of
// `inputs` against central differences.
GradCheckReport grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& opts = {});

// Same check over parameters: `loss` builds the scalar from the current
// parameter values; each trainable parameter is perturbed in place.
GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss,
                                  const std::vector<Parameter*>& params,
                                  const GradCheckOptions& opts = {});

}  // namespace xmlc
