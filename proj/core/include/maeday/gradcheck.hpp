#pragma once

#include <functional>
#include <span>

#include "maeday/autograd.hpp"

namespace maeday {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  // Location and values of the worst entry.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
// the floor keeps entries whose true gradient is ~0 from dividing by noise.
inline constexpr double kGradCheckFloor = 1e-6;

// Compares the reverse-mode gradient of a scalar function against five-point
// central finite differences with step h, entry by entry. Returns the worst relative error.
double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x, double h);

// Same comparison for a loss over a set of parameters. The loss closure must
// rebuild the graph on each call. stride > 1 checks every stride-th entry only.
GradCheckReport grad_check_parameters(const std::function<Var<double>()>& loss,
                                      std::span<Parameter<double>* const> params, double h, std::size_t stride = 1,
                                      double floor = kGradCheckFloor);

}  // namespace maeday
