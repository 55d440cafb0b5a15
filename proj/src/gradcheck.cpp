#include "rqen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace rqen {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(ParamStore& params, const LossBuilder& build,
                               const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("gradient_check: step must be > 0");
  if (!(options.tolerance >= 0.0)) {
    throw std::invalid_argument("gradient_check: tolerance must be >= 0");
  }

  // Two independently built graphs, and two evaluations of the second, must
  // agree before any verdict is given.
  GradCheckReport report;
  Graph first;
  const Var first_loss = build(first, params);
  first.forward();
  Graph graph;
  const Var loss = build(graph, params);
  graph.forward();
  const double base = graph.value(loss).item();
  const std::vector<bool> base_pattern = graph.kink_pattern();
  graph.forward();
  if (first.value(first_loss).item() != base || graph.value(loss).item() != base) {
    report.deterministic = false;
    return report;
  }

  params.zero_grad();
  graph.backward(loss);

  std::vector<GradCheckEntry> all;
  for (const std::string& name : params.names()) {
    Tensor& value = params.value(name);
    const Tensor& grad = params.grad(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      GradCheckEntry e;
      e.name = name;
      e.index = i;
      e.analytic = grad[i];
      double h = options.step;
      for (std::size_t attempt = 0;; ++attempt, h /= 10.0) {
        value[i] = saved + h;
        graph.forward();
        const double plus = graph.value(loss).item();
        bool same_piece = graph.kink_pattern() == base_pattern;
        value[i] = saved - h;
        graph.forward();
        const double minus = graph.value(loss).item();
        same_piece = same_piece && graph.kink_pattern() == base_pattern;
        e.numeric = (plus - minus) / (2.0 * h);
        e.step = h;
        e.kink_crossed = !same_piece;
        if (same_piece || attempt == options.kink_retries) break;
      }
      value[i] = saved;
      if (e.step != options.step) ++report.step_reduced;
      e.relative_error = relative_error(e.analytic, e.numeric);
      all.push_back(std::move(e));
    }
  }
  graph.forward();
  if (graph.value(loss).item() != base) report.deterministic = false;

  report.checked = all.size();
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.relative_error > b.relative_error;
  });
  report.max_relative_error = all.empty() ? 0.0 : all.front().relative_error;
  all.resize(std::min(all.size(), options.report_worst));
  report.worst = std::move(all);
  report.passed = report.deterministic && report.max_relative_error < options.tolerance;
  return report;
}

std::string format_report(const GradCheckReport& report, double tolerance) {
  std::string out;
  char line[256];
  if (!report.deterministic) {
    return "gradcheck: closure is not deterministic; no verdict\n";
  }
  std::snprintf(line, sizeof line,
                "gradcheck: %s  checked=%zu  max_rel_error=%.3e  tolerance=%.1e  reduced_steps=%zu\n",
                report.passed ? "PASS" : "FAIL", report.checked, report.max_relative_error,
                tolerance, report.step_reduced);
  out += line;
  for (const auto& e : report.worst) {
    std::snprintf(line, sizeof line, "  %-36s [%5zu] analytic=% .9e numeric=% .9e rel=%.3e step=%.0e%s\n",
                  e.name.c_str(), e.index, e.analytic, e.numeric, e.relative_error, e.step,
                  e.kink_crossed ? " (kink)" : "");
    out += line;
  }
  return out;
}

}  // namespace rqen
