#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pfn/parameters.hpp"
#include "pfn/tape.hpp"

namespace pfn {

struct GradCheckTarget {
  std::string name;
  Tensor* tensor;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  // False when the function gave different values for identical parameters.
  bool deterministic = true;

  bool passed() const;
  double max_rel_error() const;
};

struct GradCheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-4;
  // 0 checks every entry; otherwise an evenly strided subset per tensor.
  std::size_t max_entries_per_tensor = 0;
};

// Builds the scalar objective on a fresh tape; must bind the targets with
// Tape::parameter so gradients reach them.
using ScalarObjective = std::function<Var(Tape&)>;

// Central differences (f(θ+eps) - f(θ-eps)) / 2eps against reverse-mode
// gradients, relative error |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const ScalarObjective& objective, std::vector<GradCheckTarget> targets,
                           const GradCheckOptions& options = {});

GradCheckReport grad_check(const ScalarObjective& objective, ParameterStore& store,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric) noexcept;

}  // namespace pfn
