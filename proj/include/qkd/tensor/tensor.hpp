#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qkd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Storage shared by every handle to the same tensor.
struct TensorImpl {
  Shape shape;
  std::vector<double> values;  // row-major
  std::vector<double> grad;    // empty until a gradient arrives
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t id = 0;
  std::string name;
};

/// Handle to an n-dimensional array of doubles that may take part in a
/// reverse-mode graph. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Wraps a result produced by an operation; not a leaf.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        bool requires_grad);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  /// Direct write access; intended for initialisation and optimisers.
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->values[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->is_leaf; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  /// Drops the gradient buffer entirely.
  void zero_grad() { impl_->grad.clear(); }

  std::uint64_t id() const { return impl_->id; }
  const std::string& name() const { return impl_->name; }
  Tensor& set_name(std::string name);

  /// Leaf copy of the values with no history.
  Tensor detach() const;
  /// Deep copy that keeps requires_grad and name but no gradient.
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// One recorded operation, kept after backward for inspection.
struct GraphNode {
  std::string op;
  std::vector<std::uint64_t> input_ids;
  std::uint64_t output_id = 0;
};

/// Tape of differentiable operations. Constructing a Graph makes it the
/// current graph of the calling thread until it is destroyed; operations
/// executed while no graph is current record nothing and produce tensors
/// without gradient history. A graph can be differentiated exactly once.
class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* current();

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward function in
  /// reverse creation order. Throws StateError on a consumed graph and
  /// TrainingError when a leaf gradient turns non-finite.
  void backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::span<const GraphNode> nodes() const { return nodes_; }

  void record(std::string_view op, std::vector<Tensor> inputs,
              const Tensor& output, BackwardFn backward);

 private:
  struct Entry {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<GraphNode> nodes_;
  std::vector<Entry> entries_;
  Graph* previous_ = nullptr;
  bool consumed_ = false;
};

/// Disables recording for its lifetime even if a graph is current.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace autograd {

/// True when a graph is recording and any input requires a gradient.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);

/// Gradient buffer of `t`, allocated (zeroed) on first use. Empty span when
/// `t` does not require a gradient.
std::span<double> grad_of(TensorImpl& t);

}  // namespace autograd

}  // namespace qkd
