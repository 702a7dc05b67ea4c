#include "a3s/autodiff/params.hpp"

#include <cmath>
#include <cstring>

#include "a3s/errors.hpp"

namespace a3s {

Tensor& ParameterSet::add(std::string name, Tensor t) {
  if (params_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  t.mutable_grad();
  return params_.emplace(std::move(name), std::move(t)).first->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

ParameterSet ParameterSet::with_prefix(std::string_view prefix) const {
  ParameterSet out;
  for (const auto& [name, t] : params_)
    if (name.starts_with(prefix)) out.params_.emplace(name, t);
  return out;
}

ParameterSet ParameterSet::without_prefix(std::string_view prefix) const {
  ParameterSet out;
  for (const auto& [name, t] : params_)
    if (!name.starts_with(prefix)) out.params_.emplace(name, t);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : params_) {
    mix(name.data(), name.size());
    for (auto d : t.shape()) mix(&d, sizeof d);
    mix(t.data().data(), t.numel() * sizeof(double));
  }
  return h;
}

void sgd_step(ParameterSet& params, double lr) {
  for (auto& [name, t] : params)
    if (!t.has_grad()) throw UsageError("sgd_step: parameter '" + name + "' has no gradient");
  for (auto& [_, t] : params) {
    auto data = t.mutable_data();
    auto grad = t.mutable_grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
    t.zero_grad();
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (auto& [_, t] : params)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, t] : params)
      for (double& g : t.mutable_grad()) g *= s;
  }
  return norm;
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return uniform_tensor(std::move(shape), -bound, bound, rng);
}

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace a3s
