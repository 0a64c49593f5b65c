#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mlf/tensor.hpp"

namespace mlf {

struct GradCheckEntry {
  std::string name;       // parameter name
  std::size_t index = 0;  // flat element index
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t failed = 0;
  bool passed = false;
  std::vector<GradCheckEntry> worst;  // failures, or the single worst entry
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Gradients with magnitude below this are compared absolutely.
  double magnitude_floor = 1e-6;
};

/// Relative error with a magnitude floor: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares tape gradients of the scalar `loss_fn()` w.r.t. every element of
/// every tensor in `params` against central differences. `loss_fn` must be
/// deterministic and rebuild its graph on each call.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<std::pair<std::string, Tensor>> params,
                           const GradCheckOptions& options = {});

}  // namespace mlf
