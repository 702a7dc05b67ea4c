#include "a3s/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace a3s {

double max_gradient_error(const std::function<Tensor(Tape&)>& loss_fn, std::vector<Tensor> inputs,
                          double step) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    backward(loss, tape);
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      Tape tp;
      const double up = loss_fn(tp).item();
      data[i] = saved - step;
      Tape tm;
      const double down = loss_fn(tm).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    t.zero_grad();
  }
  return worst;
}

}  // namespace a3s
