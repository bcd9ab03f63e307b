#pragma once

#include <functional>
#include <string>
#include <vector>

#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool finite = true;
  std::string worst;  // "tensor_index[i]  analytic=..  numeric=.."

  bool passes(double tol) const { return finite && max_rel_err < tol; }
};

// Compares reverse-mode gradients of a scalar-valued fragment against central
// finite differences over every element of the listed tensors. The fragment
// is re-evaluated from the tensors' current values on each call, so it must
// not consume randomness of its own.
GradCheckReport grad_check(const std::function<TensorPtr(Tape&)>& fragment,
                           const std::vector<TensorPtr>& wrt, double step = 1e-4);

}  // namespace boltzseg
