#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "m2a/rng.hpp"

namespace m2a {

/// Row-major extents, outermost axis first.
using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

namespace detail {

/// One vertex of the computation graph. Holds the value, the accumulated
/// gradient, and a closure that scatters this node's gradient into its
/// inputs' gradients.
template <class S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // sized iff requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  bool is_leaf() const { return !backprop; }
};

/// Thread-local switch: while disabled, ops compute values but record no
/// graph (used for evaluation and finite-difference probes).
bool grad_enabled();
void set_grad_enabled(bool on);

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::set_grad_enabled(false); }
  ~NoGradGuard() { detail::set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense n-dimensional tensor participating in a reverse-mode graph.
/// Copying a TensorT copies the handle, not the buffer; buffers are written
/// only by the op that created them, so handles are safe to pass around and
/// move across threads. One graph must be built and traversed by one thread
/// at a time.
template <class S>
class TensorT {
 public:
  using scalar_type = S;
  using NodePtr = std::shared_ptr<detail::Node<S>>;

  TensorT() = default;
  explicit TensorT(NodePtr n) : node_(std::move(n)) {}

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }
  static TensorT filled(Shape shape, S v, bool requires_grad = false) {
    for (int e : shape)
      if (e <= 0) fail("tensor extents must be positive, got " + shape_str(shape));
    auto n = std::make_shared<detail::Node<S>>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), v);
    set_requires_grad_on(*n, requires_grad);
    return TensorT(std::move(n));
  }
  static TensorT scalar(S v, bool requires_grad = false) {
    return filled(Shape{1}, v, requires_grad);
  }
  static TensorT from(Shape shape, std::vector<S> values, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      fail("value count " + std::to_string(values.size()) + " does not match shape " +
           shape_str(shape));
    auto n = std::make_shared<detail::Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    set_requires_grad_on(*n, requires_grad);
    return TensorT(std::move(n));
  }
  template <class U>
  static TensorT from_cast(const Shape& shape, const std::vector<U>& values,
                           bool requires_grad = false) {
    std::vector<S> v(values.begin(), values.end());
    return from(shape, std::move(v), requires_grad);
  }
  static TensorT randn(Shape shape, Rng& rng, S stddev = S(1), bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->value) v = static_cast<S>(rng.normal()) * stddev;
    return t;
  }
  /// Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in).
  static TensorT kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng,
                                 bool requires_grad = true) {
    TensorT t = zeros(std::move(shape), requires_grad);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.node_->value) v = static_cast<S>(rng.uniform(-bound, bound));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int extent(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  std::int64_t numel() const { return node_->numel(); }

  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }

  S item() const {
    if (numel() != 1) fail("item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { set_requires_grad_on(*node_, on); }

  S* grad() { return node_->requires_grad ? node_->grad.data() : nullptr; }
  const S* grad() const { return node_->requires_grad ? node_->grad.data() : nullptr; }
  const std::vector<S>& grad_values() const { return node_->grad; }
  void zero_grad() {
    for (auto& g : node_->grad) g = S(0);
  }

  /// Values-only copy with no graph attached.
  TensorT detached() const {
    auto n = std::make_shared<detail::Node<S>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return TensorT(std::move(n));
  }

  /// Reverse-mode sweep from a scalar. Gradients of leaf tensors accumulate
  /// across calls; interior gradients are recomputed fresh each call.
  void backward() const;

  const NodePtr& node() const { return node_; }

 private:
  static void set_requires_grad_on(detail::Node<S>& n, bool on) {
    n.requires_grad = on;
    if (on)
      n.grad.assign(n.value.size(), S(0));
    else
      n.grad.clear();
  }

  NodePtr node_;
};

using Tensor = TensorT<double>;    // verification/test precision
using Tensor32 = TensorT<float>;  // training precision

template <class S>
void TensorT<S>::backward() const {
  using NodeT = detail::Node<S>;
  if (!node_) fail("backward() on an undefined tensor");
  if (numel() != 1) fail("backward() requires a scalar loss, got shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order topological sort; each node is entered once and
  // appended to `order` after all of its inputs.
  std::vector<NodeT*> order;
  {
    std::unordered_map<NodeT*, bool> state;  // false = entered, true = done
    std::vector<NodeT*> dfs{node_.get()};
    while (!dfs.empty()) {
      NodeT* n = dfs.back();
      auto it = state.find(n);
      if (it == state.end()) {
        state.emplace(n, false);
        for (auto& in : n->inputs)
          if (in->requires_grad && !state.count(in.get())) dfs.push_back(in.get());
      } else if (!it->second) {
        it->second = true;
        order.push_back(n);
        dfs.pop_back();
      } else {
        dfs.pop_back();
      }
    }
  }

  // Fresh pass for interior nodes; leaves keep accumulating.
  for (NodeT* n : order)
    if (!n->is_leaf())
      for (auto& g : n->grad) g = S(0);
  node_->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace m2a
