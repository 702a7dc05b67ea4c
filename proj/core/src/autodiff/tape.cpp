#include "a3s/autodiff/tape.hpp"

#include "a3s/errors.hpp"

namespace a3s {
namespace {
std::string& fault_slot() {
  static std::string op;
  return op;
}
}  // namespace

namespace detail {
void set_backward_fault(std::string op) { fault_slot() = std::move(op); }
const std::string& backward_fault() { return fault_slot(); }
}  // namespace detail

void Tape::record(std::string op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  entries_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;  // nothing on the tape depends on a parameter
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;

  const std::string& fault = detail::backward_fault();
  auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    if (!fault.empty() && it->op == fault) {
      std::vector<std::vector<double>> before;
      for (const auto& in : it->inputs)
        before.emplace_back(in.has_grad() ? std::vector<double>(in.grad().begin(), in.grad().end())
                                          : std::vector<double>(in.numel(), 0.0));
      it->backward();
      for (std::size_t k = 0; k < it->inputs.size(); ++k) {
        Tensor in = it->inputs[k];
        if (!in.has_grad()) continue;
        auto g = in.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = before[k][i] + 1.5 * (g[i] - before[k][i]);
      }
      continue;
    }
    it->backward();
  }
}

}  // namespace a3s
