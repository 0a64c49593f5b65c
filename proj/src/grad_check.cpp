#include "mlf/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mlf {

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<std::pair<std::string, Tensor>> params,
                           const GradCheckOptions& options) {
  for (auto& [name, p] : params) p.zero_grad();
  loss_fn().backward();

  GradCheckReport report;
  GradCheckEntry worst;
  for (auto& [name, p] : params) {
    const std::vector<double> analytic =
        p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                     : std::vector<double>(p.numel(), 0.0);
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double up = loss_fn().item();
      values[i] = original - options.step;
      const double down = loss_fn().item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);

      GradCheckEntry entry{name, i, analytic[i], numeric,
                           relative_error(analytic[i], numeric,
                                          options.magnitude_floor)};
      ++report.checked;
      if (entry.rel_error > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
        worst = entry;
      }
      if (entry.rel_error > options.tol) {
        ++report.failed;
        if (report.worst.size() < 20) report.worst.push_back(entry);
      }
    }
    p.zero_grad();
  }
  report.passed = report.failed == 0;
  if (report.worst.empty() && report.checked > 0) report.worst.push_back(worst);
  return report;
}

}  // namespace mlf
