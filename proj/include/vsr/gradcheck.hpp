#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "vsr/tensor.hpp"

namespace vsr {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference verification of already-accumulated analytic gradients.
// `loss_fn` must be a deterministic pure forward of the current parameter
// values. Meant to run on the double instantiation of the model.
template <typename T>
GradCheckReport grad_check(const std::function<T()>& loss_fn,
                           const std::vector<std::pair<std::string, ParameterT<T>*>>& params,
                           T eps) {
  if (!(eps >= T(1e-6) && eps <= T(1e-3))) throw argument_error("grad_check eps out of [1e-6, 1e-3]");
  GradCheckReport report;
  for (const auto& [name, p] : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const T saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const T f_plus = loss_fn();
      p->value.data[i] = saved - eps;
      const T f_minus = loss_fn();
      p->value.data[i] = saved;
      const double numeric = static_cast<double>(f_plus - f_minus) / (2.0 * static_cast<double>(eps));
      const double analytic = static_cast<double>(p->grad.data[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace vsr
