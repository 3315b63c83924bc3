#include "qkd/tensor/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "qkd/errors.hpp"

namespace qkd {

namespace {

std::atomic<std::uint64_t> next_id{1};
thread_local Graph* current_graph = nullptr;
thread_local bool grad_disabled = false;

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values,
                                      bool requires_grad, bool leaf) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  impl->is_leaf = leaf;
  impl->id = next_id.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(make_impl(std::move(shape), std::move(values), requires_grad,
                      true)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = qkd::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values,
                       bool requires_grad) {
  Tensor t;
  t.impl_ = make_impl(std::move(shape), std::move(values), requires_grad,
                      !requires_grad);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape()));
  }
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_->is_leaf) {
    throw StateError("requires_grad can only be changed on leaf tensors");
  }
  impl_->requires_grad = on;
  return *this;
}

Tensor& Tensor::set_name(std::string name) {
  impl_->name = std::move(name);
  return *this;
}

Tensor Tensor::detach() const {
  return Tensor(impl_->shape, impl_->values, false);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->values, impl_->requires_grad);
  t.impl_->name = impl_->name;
  return t;
}

Graph::Graph() : previous_(current_graph) { current_graph = this; }

Graph::~Graph() { current_graph = previous_; }

Graph* Graph::current() { return grad_disabled ? nullptr : current_graph; }

void Graph::record(std::string_view op, std::vector<Tensor> inputs,
                   const Tensor& output, BackwardFn backward) {
  if (consumed_) {
    throw StateError("cannot record '" + std::string(op) +
                     "' into a graph that was already differentiated");
  }
  GraphNode node;
  node.op = std::string(op);
  node.output_id = output.id();
  Entry entry;
  for (const auto& t : inputs) {
    node.input_ids.push_back(t.id());
    entry.inputs.push_back(t.shared());
  }
  entry.output = output.shared();
  entry.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  entries_.push_back(std::move(entry));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) {
    throw StateError("graph already consumed by a previous backward pass");
  }
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " +
                     to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw StateError("loss does not depend on any tensor requiring grad");
  }
  consumed_ = true;
  auto seed = autograd::grad_of(*loss.impl());
  seed[0] += 1.0;

  std::unordered_set<TensorImpl*> leaves;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& out = *it->output;
    if (!out.grad.empty()) it->backward(out.grad);
    for (const auto& in : it->inputs) {
      if (in->is_leaf && in->requires_grad) leaves.insert(in.get());
    }
  }
  entries_.clear();

  for (TensorImpl* leaf : leaves) {
    for (double g : leaf->grad) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient in tensor '" +
                            (leaf->name.empty() ? std::string("<unnamed>")
                                                : leaf->name) +
                            "'");
      }
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(grad_disabled) { grad_disabled = true; }

NoGradGuard::~NoGradGuard() { grad_disabled = previous_; }

namespace autograd {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Graph::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool should_record(std::span<const Tensor> inputs) {
  if (Graph::current() == nullptr) return false;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

std::span<double> grad_of(TensorImpl& t) {
  if (!t.requires_grad) return {};
  if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
  return t.grad;
}

}  // namespace autograd

}  // namespace qkd
