#include "spikecomp/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace spikecomp {

namespace {

thread_local bool g_grad_enabled = true;
bool g_nan_check = false;
std::atomic<std::uint64_t> g_next_node_id{1};

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(spikecomp::numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  if (values.size() != spikecomp::numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

std::vector<double>& grad_buffer(const Tensor& t) {
  auto& g = t.impl()->grad;
  if (g.size() != t.numel()) g.assign(t.numel(), 0.0);
  return g;
}

bool grad_enabled() { return g_grad_enabled; }

void set_nan_check(bool enabled) { g_nan_check = enabled; }
bool nan_check_enabled() { return g_nan_check; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {

void check_nan(const std::string& op, const std::vector<double>& values) {
  if (!g_nan_check) return;
  for (double v : values) {
    if (std::isnan(v)) throw std::domain_error("NaN produced by op '" + op + "'");
  }
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

}  // namespace

Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  check_nan(op, values);
  Tensor out(std::move(shape), std::move(values));
  if (g_grad_enabled && any_requires_grad(inputs)) {
    auto node = std::make_shared<Node>();
    node->id = g_next_node_id++;
    node->op = std::move(op);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.impl()->grad_fn = std::move(node);
    out.set_requires_grad(true);
  }
  return out;
}

Tensor custom_op(std::string op, Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, CustomGradRule rule) {
  Tensor out = make_result(std::move(op), std::move(shape), std::move(values), std::move(inputs),
                           [](Node&, std::span<const double>) {});
  if (out.grad_fn()) out.grad_fn()->custom = std::move(rule);
  return out;
}

void register_custom_gradient(const Tensor& output, CustomGradRule rule) {
  if (!output.defined() || !output.grad_fn()) {
    throw std::invalid_argument("register_custom_gradient: tensor was not produced by a recorded op");
  }
  output.grad_fn()->custom = std::move(rule);
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }

  // Post-order DFS over tensors that take part in the graph.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  struct Frame {
    TensorImpl* t;
    std::size_t next;
  };
  std::vector<Frame> stack;
  if (loss.requires_grad()) {
    stack.push_back({loss.impl(), 0});
    visited.insert(loss.impl());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* node = f.t->grad_fn.get();
    if (node && f.next < node->inputs.size()) {
      TensorImpl* child = node->inputs[f.next++].impl();
      if (child && child->requires_grad && visited.insert(child).second) {
        stack.push_back({child, 0});
      }
      continue;
    }
    order.push_back(f.t);
    stack.pop_back();
  }

  for (TensorImpl* t : order) {
    if (t->grad_fn) t->grad.assign(t->data.size(), 0.0);
  }
  if (loss.grad_fn()) {
    loss.impl()->grad.assign(1, 1.0);
  } else {
    grad_buffer(loss)[0] += 1.0;
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    Node* node = t->grad_fn.get();
    if (!node) continue;
    std::span<const double> gout(t->grad);
    if (node->custom) {
      auto grads = node->custom(gout, node->inputs);
      for (std::size_t i = 0; i < node->inputs.size() && i < grads.size(); ++i) {
        const Tensor& in = node->inputs[i];
        if (!in.requires_grad() || grads[i].empty()) continue;
        if (grads[i].size() != in.numel()) {
          throw ShapeError("custom gradient for op '" + node->op + "' returned " +
                           std::to_string(grads[i].size()) + " values for input of shape " +
                           shape_str(in.shape()));
        }
        auto& buf = grad_buffer(in);
        for (std::size_t k = 0; k < buf.size(); ++k) buf[k] += grads[i][k];
      }
    } else if (node->backward) {
      node->backward(*node, gout);
    }
  }
}

}  // namespace spikecomp
