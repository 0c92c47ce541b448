#include "har/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace har {

namespace {

double evaluate(const TapeFunction& fn, std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.parameter(t, nullptr));
  const Var out = fn(tape, vars);
  const Tensor& value = tape.value(out);
  if (value.size() != 1) throw DimensionError("grad_check: function output " + to_string(value.shape()) + " is not scalar");
  return value[0];
}

}  // namespace

GradCheckReport grad_check(const TapeFunction& fn, std::span<const Tensor> inputs, const GradCheckOptions& options) {
  std::vector<Tensor> grads;
  grads.reserve(inputs.size());
  for (const Tensor& t : inputs) grads.emplace_back(t.shape());
  {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t k = 0; k < inputs.size(); ++k) vars.push_back(tape.parameter(inputs[k], &grads[k]));
    const Var out = fn(tape, vars);
    tape.backward(out);
  }

  std::vector<GradCoordinate> coords = options.coordinates;
  if (coords.empty()) {
    for (std::size_t k = 0; k < inputs.size(); ++k)
      for (std::size_t i = 0; i < inputs[k].size(); ++i) coords.push_back({k, i});
  }

  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  GradCheckReport report;
  for (const auto& c : coords) {
    double& x = probe.at(c.input)[c.index];
    const double saved = x;
    const double h = options.eps;
    auto at = [&](double offset) {
      x = saved + offset;
      return evaluate(fn, probe);
    };
    double numeric = 0.0;
    if (options.fourth_order) {
      const double d1 = at(h) - at(-h), d2 = at(2.0 * h) - at(-2.0 * h);
      numeric = (8.0 * d1 - d2) / (12.0 * h);
    } else {
      numeric = (at(h) - at(-h)) / (2.0 * h);
    }
    x = saved;
    const double analytic = grads[c.input][c.index];
    const double err = std::abs(analytic - numeric) / std::max(options.floor, std::abs(analytic) + std::abs(numeric));
    if (err > report.max_rel_error || report.probed == 0) {
      report.max_rel_error = err;
      report.worst = c;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
    ++report.probed;
  }
  return report;
}

double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& input, double eps) {
  const TapeFunction wrapped = [&fn](Tape& tape, std::span<const Var> vars) { return fn(tape, vars[0]); };
  GradCheckOptions options;
  options.eps = eps;
  return grad_check(wrapped, std::span<const Tensor>(&input, 1), options).max_rel_error;
}

}  // namespace har
