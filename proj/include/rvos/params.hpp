#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rvos/tensor.hpp"

namespace rvos {

/// Named learnable leaves. Iteration order is lexicographic, which fixes the reduction
/// and serialization order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> values) {
    if (params_.count(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
    Tensor t(std::move(shape), std::move(values), true);
    params_.emplace(name, t);
    return t;
  }

  Tensor zeros(const std::string& name, Shape shape) {
    const auto n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, 0.0));
  }

  Tensor constant(const std::string& name, Shape shape, double value) {
    const auto n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, value));
  }

  /// Uniform in [-bound, bound].
  Tensor uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return add(name, std::move(shape), std::move(v));
  }

  Tensor normal(const std::string& name, Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return add(name, std::move(shape), std::move(v));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  /// Writable storage of a parameter; used by optimizers and finite differences.
  std::vector<double>& values(const std::string& name) { return detail::mutable_values(get(name)); }

  void zero_grad() {
    for (auto& [name, t] : params_) {
      auto& g = t.node()->grad;
      std::fill(g.begin(), g.end(), 0.0);
    }
  }

  /// Gradient of a parameter, zero-filled when no backward pass reached it.
  std::vector<double> gradient(const std::string& name) const {
    const auto& t = get(name);
    auto g = t.node()->grad;
    if (g.size() != t.numel()) g.assign(t.numel(), 0.0);
    return g;
  }

  std::size_t size() const { return params_.size(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

  const std::map<std::string, Tensor>& items() const { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

/// Largest |analytic - central difference| / max(1, |central difference|) over every
/// parameter element, with step `eps`.
inline double grad_check(const std::function<Tensor()>& loss_fn, ParamStore& params, double eps = 1e-4) {
  auto evaluate = [&]() {
    const double v = loss_fn().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
  };

  params.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
  loss.backward();

  double worst = 0.0;
  NoGradGuard no_grad;
  for (const auto& [name, tensor] : params.items()) {
    const auto analytic = params.gradient(name);
    auto& values = params.values(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double plus = evaluate();
      values[i] = original - eps;
      const double minus = evaluate();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  params.zero_grad();
  return worst;
}

}  // namespace rvos
