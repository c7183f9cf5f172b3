#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pfn/tensor.hpp"

namespace pfn {

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kNone = UINT32_MAX;
  std::uint32_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

// Ordered record of the primitive operations of one forward pass.
//
// Every operation appends a node holding its value and an adjoint closure.
// backward() walks the record once in reverse, so each node's adjoint runs
// after all of its consumers have contributed to its gradient. Parameter
// leaves forward their gradient into the bound Tensor's grad buffer.
//
// Vectors are rank-1, matrices rank-2 row-major. All outputs are checked for
// finiteness; a NaN/Inf raises NumericError naming the operation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf reading `t` in place. Gradients accumulate into t.grad() when the
  // tensor has a grad buffer; the tensor must outlive the tape.
  Var parameter(Tensor& t);
  Var parameter(const Tensor& t);
  Var constant(Tensor t);
  Var constant(std::vector<double> values);

  // W x + b; `b` may be an invalid Var for no bias.
  Var linear(Var x, Var w, Var b);
  // Row-wise linear map: X[L x n] -> X W^T + b, shape [L x m].
  Var linear_rows(Var x, Var w, Var b);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double factor);
  Var one_minus(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var elu(Var a);
  // Dispatch by name: add, sub, hadamard, tanh, sigmoid, elu, one_minus.
  Var elementwise(std::string_view op, Var a, Var b = {});

  Var softmax(Var a);
  Var cumsum(Var a);
  // cumsum(softmax(a)), composed from the two primitives above.
  Var cummax(Var a);
  // out_i = sum_{j > i} a_j.
  Var suffix_sum(Var a);
  // 1 - cummax(a) as the softmax mass after each index: no cancellation, and
  // the last entry is exactly 0.
  Var one_minus_cummax(Var a);
  // [a, a, ..., a] repeated `times` times.
  Var tile(Var a, std::size_t times);

  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var stack_rows(std::span<const Var> rows);
  Var row(Var m, std::size_t i);
  Var concat_cols(Var a, Var b);
  Var col_block(Var m, std::size_t begin, std::size_t width);
  // Column-wise maximum over rows: [L x n] -> [n].
  Var max_rows(Var m);
  // out[i*L + j] = a[i] + b[j] + c for a,b [L x h], c [h]; shape [L*L x h].
  Var pairwise_sum(Var a, Var b, Var c);
  Var gather_rows(Var table, std::span<const std::size_t> ids);
  // Elementwise product with a constant factor (dropout masks).
  Var mask_multiply(Var a, std::vector<double> factor);
  Var sum(Var a);
  // sum over cells with weight[k] != 0 of weight[k] * BCE(clamp(p[k]), y[k]),
  // probabilities clamped to [eps, 1 - eps].
  Var bce_sum(Var p, std::span<const double> target, std::span<const double> weight, double eps);

  const Shape& shape(Var v) const;
  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  // Rounding error of scalar(v) carried by compensated sums and scalar adds;
  // scalar(v) + residual(v) is the sum to about twice double precision.
  double residual(Var v) const;
  // Adjoint of `v` after backward(); empty if `v` was not reached.
  std::span<const double> grad(Var v) const;

  // Seeds d root / d root = 1 (all-ones for non-scalars) and replays adjoints.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t last_backward_visits() const noexcept { return visits_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    double residual = 0.0;
    std::vector<double> grad;
    std::function<void(Tape&, std::uint32_t)> adjoint;
  };

  Var push(Shape shape, std::vector<double> value, std::function<void(Tape&, std::uint32_t)> adjoint,
           const char* op);
  const Node& node(Var v) const;
  std::span<const double> val(std::uint32_t id) const;
  std::span<double> grad_of(std::uint32_t id);
  std::span<const double> out_grad(std::uint32_t id) const { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

}  // namespace pfn
