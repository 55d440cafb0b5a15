#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rqen/autodiff.hpp"

namespace rqen {

// Builds the scalar loss of a model inside `graph`, reading trainables from
// `params`. Must be deterministic.
using LossBuilder = std::function<Var(Graph& graph, ParamStore& params)>;

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  std::size_t report_worst = 10;
  // When x +- step lands on another side of a rectifier, hinge or sqrt kink
  // than x, the step is divided by 10, at most this many times.
  std::size_t kink_retries = 2;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
  double step = 0.0;           // step actually used
  bool kink_crossed = false;   // still straddling a kink at the final step
};

struct GradCheckReport {
  bool deterministic = true;
  bool passed = false;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  std::size_t step_reduced = 0;  // entries evaluated with a reduced step
  std::vector<GradCheckEntry> worst;  // descending relative error
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares backward() against central differences for every scalar of every
// parameter. A closure whose two evaluations at the same point disagree is
// reported as non-deterministic and receives no verdict.
GradCheckReport gradient_check(ParamStore& params, const LossBuilder& build,
                               const GradCheckOptions& options = {});

std::string format_report(const GradCheckReport& report, double tolerance);

}  // namespace rqen
