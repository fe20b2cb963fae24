#include "maeday/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace maeday {

namespace {

void validate_step(double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw std::invalid_argument("grad_check: step must lie in [1e-6, 1e-3]");
}

double finite_scalar(const Var<double>& out) {
  if (out.value().size() != 1) throw std::invalid_argument("grad_check: function must return a scalar");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw std::domain_error("grad_check: function returned a non-finite value");
  return v;
}

}  // namespace

GradCheckReport grad_check_parameters(const std::function<Var<double>()>& loss,
                                      std::span<Parameter<double>* const> params, double h, std::size_t stride,
                                      double floor) {
  validate_step(h);
  if (stride == 0) throw std::invalid_argument("grad_check: stride must be positive");
  for (auto* p : params) p->zero_grad();
  {
    Var<double> out = loss();
    finite_scalar(out);
    out.backward();
  }
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) {
    if (p->has_grad()) {
      analytic.emplace_back(p->grad().begin(), p->grad().end());
    } else {
      analytic.emplace_back(p->value().size(), 0.0);
    }
    p->zero_grad();
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  std::size_t counter = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k]->value().values();
    for (std::size_t i = 0; i < values.size(); ++i, ++counter) {
      if (counter % stride != 0) continue;
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return finite_scalar(loss());
      };
      // Five-point central stencil, truncation error O(h^4).
      const double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12.0 * h);
      values[i] = saved;
      const double a = analytic[k][i];
      if (!std::isfinite(a)) throw std::domain_error("grad_check: non-finite analytic gradient");
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = k;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x, double h) {
  for (double v : x.values())
    if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite input");
  Parameter<double> param(Tensor<double>(x.shape(), x.storage()));
  Parameter<double>* list[] = {&param};
  return grad_check_parameters([&] { return f(param.var()); }, list, h).max_rel_error;
}

}  // namespace maeday
