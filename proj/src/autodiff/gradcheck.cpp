#include "advp/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace advp {
namespace {

double evaluate(const GraphBuilder& f, const Parameter& p, std::size_t index) {
  try {
    Tape tape;
    const double v = f(tape).value().item();
    if (!std::isfinite(v)) throw NonFiniteError("loss is non-finite");
    return v;
  } catch (const NonFiniteError& e) {
    throw GradCheckError(std::string("grad_check: ") + e.what() + " while perturbing " + p.name +
                             "[" + std::to_string(index) + "]",
                         p.name, index);
  }
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& f, const std::vector<Parameter*>& params,
                           double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step h must be positive");

  GradientMap analytic;
  {
    Tape tape;
    analytic = tape.backward(f(tape));
  }

  GradCheckResult result;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const auto it = analytic.find(p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      if (!std::isfinite(a))
        throw GradCheckError("grad_check: non-finite analytic gradient at " + p->name + "[" +
                                 std::to_string(i) + "]",
                             p->name, i);
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double plus = 0.0, minus = 0.0;
      try {
        plus = evaluate(f, *p, i);
        p->value[i] = saved - h;
        minus = evaluate(f, *p, i);
      } catch (...) {
        p->value[i] = saved;
        throw;
      }
      p->value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++result.entries_checked;
      if (err > result.max_relative_error || result.worst_parameter.empty()) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_parameter = p->name;
          result.worst_index = i;
        }
      }
    }
  }
  return result;
}

}  // namespace advp
