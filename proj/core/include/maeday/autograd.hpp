#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "maeday/tensor.hpp"

namespace maeday {

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads value.grad() of this node and accumulates into parents that require grad.
  std::function<void(Node&)> backward;
};

}  // namespace detail

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Handle to a value in a recorded computation. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value);
  static Var leaf(Tensor<T> value, bool requires_grad);
  static Var from_node(std::shared_ptr<detail::Node<T>> node);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::span<const T> grad() const { return node_->value.grad(); }
  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& shared_node() const { return node_; }

  // Reverse pass from a single-element value; gradients accumulate into leaves.
  void backward() const;

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// A trainable leaf with value semantics: copying a Parameter copies its data.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor<T> value, bool trainable = true);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const Var<T>& var() const { return var_; }
  Tensor<T>& value() { return var_.mutable_value(); }
  const Tensor<T>& value() const { return var_.value(); }
  bool trainable() const { return var_.requires_grad(); }
  void set_trainable(bool trainable);
  bool has_grad() const { return var_.defined() && var_.value().has_grad(); }
  std::span<const T> grad() const { return var_.value().grad(); }
  void zero_grad();

 private:
  Var<T> var_;
};

// Graph operations. Matrices are rank-2; row-wise ops treat all leading axes as rows.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a * b^T
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
// x[r x d] + bias[d] on every row
template <typename T> Var<T> add_row(const Var<T>& x, const Var<T>& bias);
template <typename T> Var<T> layernorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps);
template <typename T> Var<T> softmax(const Var<T>& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index);
// Places row i of src at row index[i] of an n_rows matrix of zeros. Indices must be distinct.
template <typename T> Var<T> scatter_rows(const Var<T>& src, std::span<const std::size_t> index, std::size_t n_rows);
// Repeats a length-d vector as n rows.
template <typename T> Var<T> broadcast_rows(const Var<T>& v, std::size_t n);
template <typename T> Var<T> slice_cols(const Var<T>& x, std::size_t start, std::size_t count);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
// sum_r w_r * sum_c (pred - target)^2 / (cols * sum_r w_r)
template <typename T>
Var<T> weighted_row_mse(const Var<T>& pred, const Tensor<T>& target, std::span<const T> row_weights);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

}  // namespace maeday
