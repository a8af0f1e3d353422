#pragma once
// Dense rank<=2 tensors recorded on a tape, with reverse-mode gradients.
//
// A Tape<Real> owns every intermediate value produced during one forward
// pass. Tensor<Real> is a cheap handle (tape pointer + node id). Parameters
// live outside any tape; Tape::parameter() aliases their value and gradient
// buffers so that backward passes accumulate straight into Parameter::grad.
// All tensors on one tape share the tape's scalar type, which is the
// precision mode (float for training, double for gradient checks).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stancegen {

enum class Precision { Float32, Float64 };

std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view name);

class Shape {
 public:
  Shape() = default;  // scalar
  static Shape scalar() { return Shape(); }
  static Shape vector(std::size_t n) { return Shape(1, n, 1); }
  static Shape matrix(std::size_t rows, std::size_t cols) { return Shape(2, rows, cols); }

  std::size_t rank() const { return rank_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  Shape(std::size_t rank, std::size_t rows, std::size_t cols)
      : rank_(rank), rows_(rows), cols_(cols) {}
  std::size_t rank_ = 0;
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
};

// theta (stance path) vs theta' (adversarial domain classifiers).
enum class ParamGroup { Stance, Adversarial };

template <typename Real>
struct Parameter {
  Parameter(std::string name, Shape shape, ParamGroup group)
      : name(std::move(name)), shape(shape), group(group),
        value(shape.size(), Real(0)), grad(shape.size(), Real(0)) {}

  std::string name;
  Shape shape;
  ParamGroup group;
  std::vector<Real> value;
  std::vector<Real> grad;

  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

using NodeId = std::uint32_t;
using Mask = std::vector<bool>;

template <typename Real>
class Tape;

template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<Real>* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<Real>& tape() const { return *tape_; }
  NodeId id() const { return id_; }

  const Shape& shape() const;
  std::size_t size() const { return shape().size(); }
  std::span<const Real> value() const;
  // Materializes a zero gradient if nothing has flowed here yet.
  std::span<const Real> grad() const;
  Real item() const;
  Real operator[](std::size_t i) const { return value()[i]; }

 private:
  Tape<Real>* tape_ = nullptr;
  NodeId id_ = 0;
};

template <typename Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, NodeId self)>;

  // With record_gradients=false no backward rules are stored (inference).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Real> constant(Shape shape, std::vector<Real> values);
  // Tape-owned leaf that receives gradients.
  Tensor<Real> variable(Shape shape, std::vector<Real> values);
  // Leaf aliasing a persistent parameter; one node per parameter per tape.
  Tensor<Real> parameter(Parameter<Real>& p);

  // Records an operation node. `backward` is kept only when recording and at
  // least one input requires a gradient.
  Tensor<Real> record(Shape shape, std::vector<Real> value,
                      std::initializer_list<NodeId> inputs, Backward backward);
  Tensor<Real> record(Shape shape, std::vector<Real> value,
                      std::span<const NodeId> inputs, Backward backward);

  const Shape& shape(NodeId id) const { return nodes_[id].shape; }
  std::span<const Real> value(NodeId id) const;
  std::span<Real> grad(NodeId id);
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_[id].inputs; }

  // Seeds d root = seed and replays backward rules in reverse insertion order.
  void backward(const Tensor<Real>& root, Real seed = Real(1));

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Shape shape;
    std::vector<Real> own_value;
    std::vector<Real> own_grad;
    Parameter<Real>* param = nullptr;
    std::vector<NodeId> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  Tensor<Real> push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, NodeId> param_nodes_;
  bool recording_;
};

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  return tape_->shape(id_);
}
template <typename Real>
std::span<const Real> Tensor<Real>::value() const {
  return tape_->value(id_);
}
template <typename Real>
std::span<const Real> Tensor<Real>::grad() const {
  return tape_->grad(id_);
}

// Deliberate corruption of one backward rule, used only as a negative
// control for the gradient checker. Empty string disables it.
void set_backward_fault(std::string_view op_name);
std::string_view backward_fault();

namespace ops {

enum class UnaryOp { Tanh, Sigmoid, Relu, Log, Exp, Negate, Scale };
enum class BinaryOp { Add, Sub, Mul };

std::string_view unary_name(UnaryOp op);

template <typename Real>
Tensor<Real> apply_unary(Tensor<Real> x, UnaryOp op, Real constant = Real(1));
template <typename Real>
Tensor<Real> apply_binary(Tensor<Real> a, Tensor<Real> b, BinaryOp op);

template <typename Real>
Tensor<Real> tanh(Tensor<Real> x) { return apply_unary(x, UnaryOp::Tanh); }
template <typename Real>
Tensor<Real> sigmoid(Tensor<Real> x) { return apply_unary(x, UnaryOp::Sigmoid); }
template <typename Real>
Tensor<Real> relu(Tensor<Real> x) { return apply_unary(x, UnaryOp::Relu); }
template <typename Real>
Tensor<Real> log(Tensor<Real> x) { return apply_unary(x, UnaryOp::Log); }
template <typename Real>
Tensor<Real> exp(Tensor<Real> x) { return apply_unary(x, UnaryOp::Exp); }
template <typename Real>
Tensor<Real> negate(Tensor<Real> x) { return apply_unary(x, UnaryOp::Negate); }
template <typename Real>
Tensor<Real> scale(Tensor<Real> x, Real c) { return apply_unary(x, UnaryOp::Scale, c); }

template <typename Real>
Tensor<Real> add(Tensor<Real> a, Tensor<Real> b) { return apply_binary(a, b, BinaryOp::Add); }
template <typename Real>
Tensor<Real> sub(Tensor<Real> a, Tensor<Real> b) { return apply_binary(a, b, BinaryOp::Sub); }
template <typename Real>
Tensor<Real> mul(Tensor<Real> a, Tensor<Real> b) { return apply_binary(a, b, BinaryOp::Mul); }

// W x for a rank-2 W and rank-1 x.
template <typename Real>
Tensor<Real> matvec(Tensor<Real> w, Tensor<Real> x);
// W[:, col_begin : col_begin + len(x)] x
template <typename Real>
Tensor<Real> matvec_cols(Tensor<Real> w, Tensor<Real> x, std::size_t col_begin);

template <typename Real>
Tensor<Real> concat(std::span<const Tensor<Real>> parts);
template <typename Real>
Tensor<Real> concat(std::initializer_list<Tensor<Real>> parts) {
  return concat(std::span<const Tensor<Real>>(parts.begin(), parts.size()));
}
template <typename Real>
Tensor<Real> slice(Tensor<Real> x, std::size_t offset, std::size_t length);

// Masked positions (mask[i] == false) produce exactly 0. Empty mask = none.
template <typename Real>
Tensor<Real> softmax(Tensor<Real> x, const Mask& mask = {});

template <typename Real>
Tensor<Real> weighted_sum(Tensor<Real> weights, std::span<const Tensor<Real>> vectors);

template <typename Real>
Tensor<Real> sum(Tensor<Real> x);
template <typename Real>
Tensor<Real> dot(Tensor<Real> a, Tensor<Real> b);
// Scalar x[index].
template <typename Real>
Tensor<Real> pick(Tensor<Real> x, std::size_t index);
// max(x, floor); gradient is zero where the floor is active.
template <typename Real>
Tensor<Real> clamp_min(Tensor<Real> x, Real floor);

}  // namespace ops

// Central-difference gradient check over persistent parameters. Returns the
// largest |analytic - numeric| / (|analytic| + |numeric| + 1e-12). The step
// of 1e-4 keeps cancellation noise below 1e-4 relative even for gradient
// entries around 1e-8, which deep LSTM paths produce.
double finite_difference_check(
    const std::function<Tensor<double>(Tape<double>&)>& f,
    std::span<Parameter<double>* const> params, double eps = 1e-4);

// Gradients back-propagated through `analytic` against central differences
// of `numeric`. Needed where the backward pass intentionally differs from
// the derivative of the forward value (gradient reversal).
double finite_difference_check(
    const std::function<Tensor<double>(Tape<double>&)>& analytic,
    const std::function<Tensor<double>(Tape<double>&)>& numeric,
    std::span<Parameter<double>* const> params, double eps = 1e-4);

}  // namespace stancegen
