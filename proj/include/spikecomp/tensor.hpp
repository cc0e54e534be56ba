#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikecomp {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes do not conform to what a primitive expects.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor;
struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

/// Dense row-major array of doubles with an optional gradient accumulator.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for
/// a deep copy and detach() for a copy that is cut from the graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Accumulated gradient; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<const double> grad_span() const { return impl_->grad; }
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<Node>& grad_fn() const { return impl_->grad_fn; }
  TensorImpl* impl() const { return impl_.get(); }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Replacement backward rule: receives the output gradient and the node's
/// inputs, returns one gradient vector per input (empty vector = no gradient).
using CustomGradRule = std::function<std::vector<std::vector<double>>(
    std::span<const double> grad_out, std::span<const Tensor> inputs)>;

/// Analytic backward rule: accumulates into the inputs' gradient buffers.
using BackwardFn = std::function<void(Node& node, std::span<const double> grad_out)>;

struct Node {
  std::uint64_t id = 0;
  std::string op;
  std::vector<Tensor> inputs;
  BackwardFn backward;
  CustomGradRule custom;
};

/// Returns the input's gradient buffer, allocating zeros on first use.
std::vector<double>& grad_buffer(const Tensor& t);

/// Creates an output tensor and, when grad mode is on and any input requires
/// a gradient, attaches a graph node with the given backward rule.
Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

/// Forward-only op whose backward is supplied entirely by a custom rule.
Tensor custom_op(std::string op, Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, CustomGradRule rule);

/// Overrides the backward rule of the node that produced `output`.
/// Throws std::invalid_argument when `output` has no recorded node.
void register_custom_gradient(const Tensor& output, CustomGradRule rule);

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; interior gradients are recomputed from zero each call.
void backward(const Tensor& loss);

bool grad_enabled();

/// When enabled, every recorded op checks its output for NaN and throws
/// std::domain_error naming the op. Off by default; NaN otherwise propagates.
void set_nan_check(bool enabled);
bool nan_check_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace spikecomp
