#pragma once

#include <functional>
#include <string>
#include <vector>

#include "a3s/autodiff/tensor.hpp"

namespace a3s {

/// Ordered record of differentiable operations. Operations are appended as
/// they execute, so entry order is already a topological order; backward()
/// walks it in reverse and runs each rule once.
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  void record(std::string op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates through the tape. Gradients add
/// into any existing buffers, so repeated calls accumulate.
void backward(const Tensor& loss, Tape& tape);

namespace detail {
/// Test-only fault injection: when set to an op name, that op's backward rule
/// scales its gradients by 1.5. Empty string disables.
void set_backward_fault(std::string op);
const std::string& backward_fault();
}  // namespace detail

}  // namespace a3s
