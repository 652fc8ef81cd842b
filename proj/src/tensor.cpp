#include "longreach/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace longreach {

std::string shape_str(std::span<const int> shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

ShapeError::ShapeError(const std::string& op_, std::span<const int> lhs_,
                       std::span<const int> rhs_)
    : Error(op_ + ": incompatible shapes " + shape_str(lhs_) + " and " +
            shape_str(rhs_)),
      op(op_),
      lhs(lhs_.begin(), lhs_.end()),
      rhs(rhs_.begin(), rhs_.end()) {}

ShapeError::ShapeError(const std::string& op_, std::span<const int> shape,
                       const std::string& detail)
    : Error(op_ + ": bad shape " + shape_str(shape) + " (" + detail + ")"),
      op(op_),
      lhs(shape.begin(), shape.end()) {}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

size_t shape_numel(std::span<const int> shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error("tensor: negative dimension in " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data,
               bool requires_grad) {
  if (shape.empty() || shape.size() > 2)
    throw Error("tensor: rank must be 1 or 2, got shape " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw Error("tensor: shape " + shape_str(shape) + " wants " +
                std::to_string(shape_numel(shape)) + " values, got " +
                std::to_string(data.size()));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
  if (requires_grad) impl_->grad.assign(impl_->data.size(), 0.0f);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<float> values, bool requires_grad) {
  int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::row(std::vector<float> values) {
  int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<float> values) {
  int n = static_cast<int>(values.size());
  return Tensor({n, 1}, std::move(values));
}

const std::vector<int>& Tensor::shape() const {
  if (!impl_) throw Error("tensor: use of undefined tensor");
  return impl_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw Error("tensor: dim index " + std::to_string(i) + " out of range for " +
                shape_str(s));
  return s[i];
}

size_t Tensor::numel() const {
  if (!impl_) throw Error("tensor: use of undefined tensor");
  return impl_->data.size();
}

std::span<float> Tensor::data() {
  if (!impl_) throw Error("tensor: use of undefined tensor");
  return impl_->data;
}

std::span<const float> Tensor::data() const {
  if (!impl_) throw Error("tensor: use of undefined tensor");
  return impl_->data;
}

std::span<float> Tensor::grad() {
  if (!impl_) throw Error("tensor: use of undefined tensor");
  if (!impl_->requires_grad)
    throw Error("tensor: grad requested on tensor without requires_grad");
  return impl_->grad;
}

std::span<const float> Tensor::grad() const {
  return const_cast<Tensor*>(this)->grad();
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

float Tensor::at(int i) const {
  const auto& s = shape();
  if (s.size() != 1) throw Error("tensor: at(i) on shape " + shape_str(s));
  if (i < 0 || i >= s[0]) throw Error("tensor: index out of range");
  return impl_->data[static_cast<size_t>(i)];
}

float Tensor::at(int i, int j) const {
  const auto& s = shape();
  if (s.size() != 2) throw Error("tensor: at(i,j) on shape " + shape_str(s));
  if (i < 0 || i >= s[0] || j < 0 || j >= s[1])
    throw Error("tensor: index out of range");
  return impl_->data[static_cast<size_t>(i) * s[1] + j];
}

float Tensor::value() const {
  if (numel() != 1)
    throw Error("tensor: value() on non-scalar shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::value_f64() const {
  if (numel() != 1)
    throw Error("tensor: value_f64() on non-scalar shape " + shape_str(shape()));
  if (impl_->scalar_f64) return *impl_->scalar_f64;
  return static_cast<double>(impl_->data[0]);
}

void Tensor::zero_grad() {
  if (!impl_) return;
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::backward() {
  if (!impl_) throw Error("tensor: backward on undefined tensor");
  if (numel() != 1)
    throw Error("tensor: backward requires a scalar, got shape " +
                shape_str(shape()));
  if (!impl_->requires_grad)
    throw Error("tensor: backward on tensor that does not require grad");

  // Depth-first topological order over the recorded graph.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].impl();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
  // Release graph edges; leaf gradients stay in place.
  for (TensorImpl* node : order) {
    node->backward_fn = nullptr;
    node->parents.clear();
  }
}

Tensor Tensor::detach() const {
  if (!impl_) return Tensor();
  auto copy = std::make_shared<TensorImpl>();
  copy->shape = impl_->shape;
  copy->data = impl_->data;
  copy->scalar_f64 = impl_->scalar_f64;
  return Tensor(std::move(copy));
}

std::vector<float> Tensor::to_vector() const {
  auto d = data();
  return std::vector<float>(d.begin(), d.end());
}

Tensor op_result(std::vector<int> shape, std::vector<float> data,
                 std::vector<Tensor> parents,
                 std::function<void(TensorImpl&)> backward_fn) {
  bool track = grad_enabled() &&
               std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(std::move(shape), std::move(data), track);
  if (track) {
    out.impl()->parents = std::move(parents);
    out.impl()->backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace longreach
