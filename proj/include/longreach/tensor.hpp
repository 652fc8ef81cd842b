#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace longreach {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(std::span<const int> shape);

// Operand shapes did not match what an operation requires.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, std::span<const int> lhs,
             std::span<const int> rhs);
  ShapeError(const std::string& op, std::span<const int> shape,
             const std::string& detail);

  std::string op;
  std::vector<int> lhs;
  std::vector<int> rhs;
};

struct TensorImpl;

// Whether newly created ops record the backward graph on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Dense float32 tensor of rank 1 or 2 with reverse-mode autodiff.
// Copies share storage; backward() walks the recorded graph from a scalar.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<float> data,
         bool requires_grad = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value,
                     bool requires_grad = false);
  static Tensor scalar(float value);
  static Tensor vector(std::vector<float> values, bool requires_grad = false);
  static Tensor row(std::vector<float> values);     // shape [1, n]
  static Tensor column(std::vector<float> values);  // shape [n, 1]

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int ndim() const;
  int dim(int i) const;
  size_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  std::span<float> grad();
  std::span<const float> grad() const;
  bool requires_grad() const;

  float at(int i) const;
  float at(int i, int j) const;

  // Scalar readout. value_f64 returns the 64-bit accumulation when the
  // producing op kept one (reductions, losses); otherwise the float value.
  float value() const;
  double value_f64() const;

  void zero_grad();
  // Reverse pass seeded with d(self)/d(self) = 1. Requires numel() == 1.
  // Graph edges are released afterwards.
  void backward();

  // Same storage, detached from the graph, no gradient.
  Tensor detach() const;
  std::vector<float> to_vector() const;

  // Internals used by op implementations.
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // same length as data iff requires_grad
  bool requires_grad = false;
  std::optional<double> scalar_f64;

  std::vector<Tensor> parents;
  std::function<void(TensorImpl&)> backward_fn;
};

// Graph-construction helper shared by the op implementations. Records
// parents and the backward closure only when grad is enabled and some
// parent requires it.
Tensor op_result(std::vector<int> shape, std::vector<float> data,
                 std::vector<Tensor> parents,
                 std::function<void(TensorImpl&)> backward_fn);

size_t shape_numel(std::span<const int> shape);

}  // namespace longreach
