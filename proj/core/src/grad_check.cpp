#include "pfn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pfn {

namespace {

struct Evaluation {
  double value;
  double residual;
};

Evaluation evaluate(const ScalarObjective& objective) {
  Tape tape;
  const Var v = objective(tape);
  return {tape.scalar(v), tape.residual(v)};
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

bool GradCheckReport::passed() const {
  if (!deterministic) return false;
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport grad_check(const ScalarObjective& objective, std::vector<GradCheckTarget> targets,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  for (auto& t : targets) {
    t.tensor->enable_grad();
    t.tensor->zero_grad();
  }
  double base = 0.0;
  {
    Tape tape;
    Var loss = objective(tape);
    base = tape.scalar(loss);
    tape.backward(loss);
  }
  if (evaluate(objective).value != base) report.deterministic = false;

  for (auto& t : targets) {
    GradCheckEntry entry;
    entry.name = t.name;
    auto values = t.tensor->values();
    const std::vector<double> analytic(t.tensor->grad().begin(), t.tensor->grad().end());
    std::size_t stride = 1;
    if (options.max_entries_per_tensor > 0 && values.size() > options.max_entries_per_tensor) {
      stride = (values.size() + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const Evaluation up = evaluate(objective);
      values[i] = saved - options.eps;
      const Evaluation down = evaluate(objective);
      values[i] = saved;
      // The value difference is exact for nearby values; the residuals keep
      // the final rounding of a large loss out of the quotient.
      const double numeric =
          ((up.value - down.value) + (up.residual - down.residual)) / (2.0 * options.eps);
      const double err = relative_error(analytic[i], numeric);
      ++entry.checked;
      if (err > entry.max_rel_error || entry.checked == 1) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic_at_worst = analytic[i];
        entry.numeric_at_worst = numeric;
      }
    }
    entry.passed = entry.max_rel_error <= options.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport grad_check(const ScalarObjective& objective, ParameterStore& store,
                           const GradCheckOptions& options) {
  std::vector<GradCheckTarget> targets;
  for (auto& p : store.all()) targets.push_back({p.name, &p.tensor});
  return grad_check(objective, std::move(targets), options);
}

}  // namespace pfn
