#pragma once

#include <functional>
#include <vector>

#include "rsrl/tape.hpp"

namespace rsrl::num {

// Builds a scalar loss on the tape from one leaf Var per input tensor.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares reverse-mode gradients of fn against central finite differences,
// coordinate by coordinate. Returns the maximum relative error, where the
// error is normalized by max(1, |analytic|, |numeric|).
double grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double epsilon);

}  // namespace rsrl::num
