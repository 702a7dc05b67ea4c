#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "a3s/autodiff/tensor.hpp"
#include "a3s/rng.hpp"

namespace a3s {

/// Named trainable tensors, iterated in lexicographic name order. Subsets
/// returned by filtered() share storage with the original set.
class ParameterSet {
 public:
  /// Registers t (forcing requires_grad and a zeroed gradient buffer).
  /// Throws UsageError on a duplicate name.
  Tensor& add(std::string name, Tensor t);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_numel() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<std::string> names() const;
  ParameterSet with_prefix(std::string_view prefix) const;
  ParameterSet without_prefix(std::string_view prefix) const;

  void zero_grad();
  /// FNV-1a over names, shapes and raw data bytes; stable bitwise fingerprint.
  std::uint64_t checksum() const;

 private:
  std::map<std::string, Tensor> params_;
};

/// p <- p - lr * grad for every parameter, then zero the gradients.
/// Throws UsageError if a parameter has no gradient buffer.
void sgd_step(ParameterSet& params, double lr);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

// Initializers. Uniform in +-sqrt(6 / fan_in) (He uniform) for weights.
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);

}  // namespace a3s
