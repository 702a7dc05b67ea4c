#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "a3s/autodiff/gradcheck.hpp"

namespace a3s {

inline constexpr double kGradCheckTolerance = 1e-4;

/// A scalar function of some leaf tensors, checked against finite
/// differences with respect to every entry of every leaf.
struct GradProblem {
  std::function<Tensor(Tape&)> loss;
  std::vector<Tensor> inputs;
};

struct GradCase {
  std::string name;
  std::function<GradProblem()> make;
};

/// One case per differentiable op plus the network composites.
const std::vector<GradCase>& grad_cases();

/// Names of the ops a case records on its tape.
std::set<std::string> recorded_ops(const GradCase& c);

struct GradResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradReport {
  std::vector<GradResult> results;
  bool passed() const;
  std::vector<std::string> failing() const;
};

using GradProgress = std::function<void(const GradResult&)>;

GradReport run_grad_suite(double tolerance = kGradCheckTolerance, const GradProgress& progress = {});

}  // namespace a3s
