#pragma once

#include <functional>
#include <vector>

#include "a3s/autodiff/tape.hpp"
#include "a3s/autodiff/tensor.hpp"

namespace a3s {

inline constexpr double kGradCheckStep = 1e-6;
/// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor);
/// keeps entries whose true gradient is ~0 from dividing noise by noise.
inline constexpr double kGradCheckFloor = 1e-3;

/// Compares tape gradients of loss_fn with respect to every entry of every
/// input against central finite differences. loss_fn must build its result
/// on the tape it is handed and must not keep state between calls.
/// Returns the worst relative error.
double max_gradient_error(const std::function<Tensor(Tape&)>& loss_fn, std::vector<Tensor> inputs,
                          double step = kGradCheckStep);

}  // namespace a3s
