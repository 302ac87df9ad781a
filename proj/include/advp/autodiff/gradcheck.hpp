#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advp/autodiff/tape.hpp"

namespace advp {

/// Builds a scalar loss on the given tape from the current parameter values.
using GraphBuilder = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

class GradCheckError : public std::runtime_error {
 public:
  GradCheckError(const std::string& what, std::string parameter, std::size_t index)
      : std::runtime_error(what), parameter_(std::move(parameter)), index_(index) {}
  const std::string& parameter() const { return parameter_; }
  std::size_t index() const { return index_; }

 private:
  std::string parameter_;
  std::size_t index_;
};

/// Compares reverse-mode gradients of every trainable entry in `params`
/// against central differences with step h. Error per entry is
/// |analytic - numeric| / max(1, |numeric|); returns the maximum.
/// Parameters are restored before returning. A non-finite loss or gradient is
/// reported as GradCheckError naming the responsible parameter entry.
GradCheckResult grad_check(const GraphBuilder& f, const std::vector<Parameter*>& params,
                           double h = 1e-5);

}  // namespace advp
