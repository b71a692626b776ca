#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sarkit/random.hpp"
#include "sarkit/tensor.hpp"

namespace sarkit {

// A trainable tensor that outlives any single tape. Gradients accumulate in
// `grad` across backward passes until the caller zeroes them.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool trainable = true);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad();
};

enum class Mode { train, eval };

class Tape;

// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run record of a forward computation. Nodes are appended in
// execution order; backward() walks them in exact reverse order, once.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to a parameter; repeated calls on one tape share the leaf.
  Var parameter(Parameter& param);

  // Appends an op node. The node requires grad when any input does.
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }
  // Appends a node with no tape inputs whose backward writes gradients
  // elsewhere (e.g. directly into an embedding table).
  Var record_source(Tensor value, bool requires_grad, Backward backward);

  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Upstream gradient of a node; empty when nothing flowed into it.
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of a node, allocated on first use. Empty when the node
  // does not require grad.
  std::span<double> grad_buffer(std::size_t id);
  Tensor grad_of(const Var& v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* parameter = nullptr;
  };

  Var push(Node node);

  // A deque keeps earlier values in place while new nodes are recorded.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> parameter_leaves_;
  bool consumed_ = false;
};

// ---- differentiable operations -------------------------------------------

Var matmul(const Var& a, const Var& b);
// x[n x in] * w[out x in]^T (+ bias[out]).
Var linear(const Var& x, const Var& w);
Var linear(const Var& x, const Var& w, const Var& bias);
// Elementwise; `b` may also be a single row broadcast over the rows of `a`.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var log(const Var& x);
// Softmax along the last axis.
Var softmax(const Var& x);
Var concat(const Var& a, const Var& b, std::size_t axis);
// Concatenation of many parts along axis 0 (row stacking) or the last axis.
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var sum(const Var& x);
Var dropout(const Var& x, double rate, Mode mode, Rng& rng);
// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(const Var& x, double lambda);
// Rows of `table` selected by `indices`; backward scatters into table.grad.
Var lookup(Tape& tape, Parameter& table, std::span<const int> indices);
// Fused LSTM cell nonlinearity: pre-activations [1 x 4H] in gate order
// (input, forget, cell, output) and previous cell [1 x H] -> [1 x 2H] = (h', c').
Var lstm_cell(const Var& gates, const Var& cell);
// Whole unidirectional LSTM recurrence from zero state. `projected` [m x 4H]
// holds the input projections (bias included) per position; positions are
// consumed back to front when `reverse`. Returns hidden states [m x H] in
// position order. Same arithmetic as chaining lstm_cell, with backprop
// through time done inside one node.
Var lstm_sequence(const Var& projected, const Var& hidden_weights, bool reverse);

// ---- verification ---------------------------------------------------------

using TensorFunction = std::function<Var(Tape&, const Var&)>;
using ParameterFunction = std::function<Var(Tape&)>;

// Max over coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|) for a scalar-valued function of x.
double finite_diff_check(const TensorFunction& f, const Tensor& x, double eps = 1e-5);

// Same measure over the coordinates of several parameters. `stride` > 1
// checks every stride-th coordinate of each parameter.
double finite_diff_check(const ParameterFunction& f, std::span<Parameter* const> params,
                         double eps = 1e-5, std::size_t stride = 1);

}  // namespace sarkit
