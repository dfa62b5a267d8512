#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cordcpd/tensor.hpp"

namespace cordcpd {
class ParamStore;
}

namespace cordcpd::ad {

using Index = std::vector<std::uint32_t>;
using IndexPtr = std::shared_ptr<const Index>;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) noexcept : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const noexcept { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Records forward operations in execution order; backward() replays them in
/// exact reverse order. One tape per execution stream.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Leaf bound to a parameter of `store`; repeated calls return the same leaf.
  Var param(const ParamStore& store, std::size_t param_id);

  /// Appends a node. `requires_grad` false drops `backward`.
  Var record(Tensor value, bool requires_grad, BackwardFn backward, const char* op);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(std::uint32_t id);
  const Tensor* grad_if_present(std::uint32_t id) const;

  void backward(Var loss);

  /// Flat gradient aligned with the bound store; unbound parameters get zeros.
  std::vector<double> param_gradients(const ParamStore& store) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  /// With gradients disabled, parameters bind as constants and nothing
  /// downstream of them keeps backward state.
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::uint32_t>> bound_params_;
  const ParamStore* bound_store_ = nullptr;
  bool check_finite_ = true;
  bool grad_enabled_ = true;
};

// Elementwise and broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var affine(Var x, double scale, double shift);
/// x + b with b broadcast over rows (b has x.cols() elements).
Var add_row(Var x, Var b);
/// x * g with g broadcast over rows.
Var mul_row(Var x, Var g);
/// Row r of x scaled by w[r].
Var row_scale(Var x, Var w);

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var elu(Var x);

// Linear algebra. x is viewed as rows x k, w must be rank 2 (k x c).
Var matmul(Var x, Var w);
Var linear(Var x, Var w, Var b);
/// Per-batch products of row blocks. a is (batch*m) x k. With transpose_b, b is
/// (batch*n) x k and the result is A_i B_i^T; otherwise b is (batch*k) x n.
Var batched_matmul(Var a, Var b, std::size_t batch, bool transpose_b);

Var softmax_rows(Var x);
/// Zero-mean unit-variance normalisation of each row, no affine part.
Var layer_norm_rows(Var x, double eps = 1e-5);

// Structural.
Var reshape(Var x, Shape shape);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var gather_rows(Var x, IndexPtr index);
/// out[index[r]] += x[r]; out has n_out rows.
Var scatter_add_rows(Var x, IndexPtr index, std::size_t n_out);

// Reductions to a scalar.
Var sum(Var x);
Var mean(Var x);
Var sum_squares(Var x);

/// Fused GRU update with gate order (reset, update, candidate):
///   r = sigmoid(xi_r + hh_r), z = sigmoid(xi_z + hh_z)
///   n = tanh(xi_n + r * hh_n), h = (1 - z) * n + z * h_prev
/// xi and hh are rows x 3H, h_prev is rows x H.
Var gru_gates(Var xi, Var hh, Var h_prev);

/// One-hot of the row argmax in the forward pass, identity in the backward pass.
Var straight_through_one_hot(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

IndexPtr make_index(Index index);

}  // namespace cordcpd::ad
