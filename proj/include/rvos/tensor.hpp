#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace rvos {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) oss << (i ? "," : "") << shape[i];
  oss << ']';
  return oss.str();
}

class Tensor;

namespace detail {

using BackwardFn = std::function<void(const std::vector<double>& grad_out)>;

// One vertex of the operation tape. Leaves have no backward function.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

inline void check_finite(std::span<const double> values, const char* where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream oss;
      oss << where << ": non-finite value " << values[i] << " at flat index " << i;
      throw NumericError(oss.str());
    }
  }
}

}  // namespace detail

/// Disables tape recording for the lifetime of the guard (inference, matching costs).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array of doubles with an optional reverse-mode tape.
///
/// Values are immutable once built; every operation allocates a new node. Parameter
/// leaves are the exception: ParamStore updates their storage in place between steps.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
    }
    detail::check_finite(data, "Tensor");
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value) { return Tensor({}, {value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("Tensor::dim: axis out of range for " + shape_str(shape()));
    return node_->shape[axis];
  }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const double> data() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }

  double item() const {
    if (numel() != 1) throw ShapeError("Tensor::item: tensor has " + std::to_string(numel()) + " values");
    return node_->value[0];
  }

  template <typename... Index>
  double at(Index... index) const {
    static_assert(sizeof...(Index) > 0);
    const std::size_t idx[] = {static_cast<std::size_t>(index)...};
    if (sizeof...(Index) != rank()) throw ShapeError("Tensor::at: rank mismatch for " + shape_str(shape()));
    std::size_t flat = 0;
    for (std::size_t a = 0; a < sizeof...(Index); ++a) {
      if (idx[a] >= node_->shape[a]) throw ShapeError("Tensor::at: index out of range");
      flat = flat * node_->shape[a] + idx[a];
    }
    return node_->value[flat];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Accumulated gradient; empty until a backward pass reaches this tensor.
  std::span<const double> grad() const { return node_->grad; }

  /// Reverse sweep from this scalar. Leaf gradients accumulate; intermediate ones are released.
  void backward() const {
    if (numel() != 1) throw ShapeError("Tensor::backward: only scalar outputs can seed a backward pass");
    if (!requires_grad()) throw std::logic_error("Tensor::backward: tensor is not attached to a tape");

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        detail::Node* child = node->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* node = *it;
      if (!node->backward) continue;
      if (!node->grad.empty()) node->backward(node->grad);
      node->grad.clear();
    }
  }

  /// Same values, cut from the tape.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Gradient accumulator of an op input, or nullptr when the input is not tracked.
inline std::vector<double>* grad_of(const Tensor& t) {
  return t.requires_grad() ? &t.node()->grad_buffer() : nullptr;
}

inline std::vector<double>& mutable_values(const Tensor& t) { return t.node()->value; }

inline Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                          BackwardFn backward, const char* op) {
  check_finite(value, op);
  Tensor out(std::move(shape), std::move(value));
  if (grad_disabled()) return out;
  bool tracked = false;
  for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  if (!tracked) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) {
    if (in.requires_grad()) node.inputs.push_back(in.node());
  }
  node.backward = std::move(backward);
  return out;
}

inline Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                          BackwardFn backward, const char* op) {
  check_finite(value, op);
  Tensor out(std::move(shape), std::move(value));
  if (grad_disabled()) return out;
  bool tracked = false;
  for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  if (!tracked) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) {
    if (in.requires_grad()) node.inputs.push_back(in.node());
  }
  node.backward = std::move(backward);
  return out;
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

}  // namespace rvos
