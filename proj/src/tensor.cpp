#include "stancegen/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "stancegen/errors.hpp"
#include "stancegen/simd/kernels.hpp"

namespace stancegen {

std::string_view precision_name(Precision p) {
  return p == Precision::Float32 ? "float32" : "float64";
}

Precision parse_precision(std::string_view name) {
  if (name == "float32" || name == "f32" || name == "float") return Precision::Float32;
  if (name == "float64" || name == "f64" || name == "double") return Precision::Float64;
  throw ConfigError("unknown precision '" + std::string(name) + "' (expected float32 or float64)");
}

std::string Shape::str() const {
  std::ostringstream os;
  if (rank_ == 0) {
    os << "[]";
  } else if (rank_ == 1) {
    os << "[" << rows_ << "]";
  } else {
    os << "[" << rows_ << "x" << cols_ << "]";
  }
  return os.str();
}

namespace {
std::string g_backward_fault;
}  // namespace

void set_backward_fault(std::string_view op_name) { g_backward_fault = std::string(op_name); }
std::string_view backward_fault() { return g_backward_fault; }

// ---------------------------------------------------------------------------
// Tape

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return value()[0];
}

template <typename Real>
Tensor<Real> Tape<Real>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Tensor<Real>(this, static_cast<NodeId>(nodes_.size() - 1));
}

template <typename Real>
Tensor<Real> Tape<Real>::constant(Shape shape, std::vector<Real> values) {
  if (values.size() != shape.size()) {
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     shape.str());
  }
  Node n;
  n.shape = shape;
  n.own_value = std::move(values);
  return push(std::move(n));
}

template <typename Real>
Tensor<Real> Tape<Real>::variable(Shape shape, std::vector<Real> values) {
  auto t = constant(shape, std::move(values));
  nodes_[t.id()].requires_grad = recording_;
  return t;
}

template <typename Real>
Tensor<Real> Tape<Real>::parameter(Parameter<Real>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Tensor<Real>(this, it->second);
  }
  if (p.value.size() != p.shape.size() || p.grad.size() != p.shape.size()) {
    throw ShapeError("parameter '" + p.name + "' buffers do not match shape " + p.shape.str());
  }
  Node n;
  n.shape = p.shape;
  n.param = &p;
  n.requires_grad = recording_;
  auto t = push(std::move(n));
  param_nodes_.emplace(&p, t.id());
  return t;
}

template <typename Real>
Tensor<Real> Tape<Real>::record(Shape shape, std::vector<Real> value,
                                std::initializer_list<NodeId> inputs, Backward backward) {
  return record(shape, std::move(value), std::span<const NodeId>(inputs.begin(), inputs.size()),
                std::move(backward));
}

template <typename Real>
Tensor<Real> Tape<Real>::record(Shape shape, std::vector<Real> value,
                                std::span<const NodeId> inputs, Backward backward) {
  if (value.size() != shape.size()) {
    throw ShapeError("record: value length " + std::to_string(value.size()) +
                     " does not match shape " + shape.str());
  }
  Node n;
  n.shape = shape;
  n.own_value = std::move(value);
  if (recording_) {
    for (NodeId in : inputs) {
      if (nodes_[in].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) {
      n.inputs.assign(inputs.begin(), inputs.end());
      n.backward = std::move(backward);
    }
  }
  return push(std::move(n));
}

template <typename Real>
std::span<const Real> Tape<Real>::value(NodeId id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->value;
  return n.own_value;
}

template <typename Real>
std::span<Real> Tape<Real>::grad(NodeId id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  if (n.own_grad.size() != n.shape.size()) n.own_grad.assign(n.shape.size(), Real(0));
  return n.own_grad;
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& root, Real seed) {
  if (root.size() != 1) {
    throw ArgumentError("backward: root must be scalar, got shape " + root.shape().str());
  }
  grad(root.id())[0] += seed;
  for (NodeId id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.own_grad.empty()) continue;
    n.backward(*this, id);
  }
}

template <typename Real>
void Tape<Real>::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

// ---------------------------------------------------------------------------
// Operations

namespace ops {

namespace {

template <typename Real>
const simd::KernelTable<Real>& K() {
  return simd::active_kernels<Real>();
}

template <typename Real>
void require_same_tape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (!a.valid() || !b.valid()) throw ArgumentError(std::string(op) + ": invalid tensor handle");
  if (&a.tape() != &b.tape()) throw ArgumentError(std::string(op) + ": tensors on different tapes");
}

template <typename Real>
void require_vector(const Tensor<Real>& x, const char* op) {
  if (x.shape().rank() == 2) {
    throw ShapeError(std::string(op) + ": expected a vector, got shape " + x.shape().str());
  }
}

bool fault_is(std::string_view op) { return !backward_fault().empty() && backward_fault() == op; }

}  // namespace

std::string_view unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Tanh: return "tanh";
    case UnaryOp::Sigmoid: return "sigmoid";
    case UnaryOp::Relu: return "relu";
    case UnaryOp::Log: return "log";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Negate: return "negate";
    case UnaryOp::Scale: return "scale";
  }
  return "unknown";
}

template <typename Real>
Tensor<Real> apply_unary(Tensor<Real> x, UnaryOp op, Real constant) {
  if (!x.valid()) throw ArgumentError("apply_unary: invalid tensor handle");
  auto in = x.value();
  const std::size_t n = in.size();
  std::vector<Real> out(n);
  switch (op) {
    case UnaryOp::Tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      break;
    case UnaryOp::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        // Split by sign so exp never overflows.
        if (in[i] >= 0) {
          out[i] = Real(1) / (Real(1) + std::exp(-in[i]));
        } else {
          const Real e = std::exp(in[i]);
          out[i] = e / (Real(1) + e);
        }
      }
      break;
    case UnaryOp::Relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0 ? in[i] : Real(0);
      break;
    case UnaryOp::Log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(in[i] > 0)) {
          throw DomainError("log: non-positive input " + std::to_string(in[i]) + " at index " +
                            std::to_string(i));
        }
        out[i] = std::log(in[i]);
      }
      break;
    case UnaryOp::Exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
      break;
    case UnaryOp::Negate:
      for (std::size_t i = 0; i < n; ++i) out[i] = -in[i];
      break;
    case UnaryOp::Scale:
      K<Real>().scale(constant, in.data(), out.data(), n);
      break;
  }

  const NodeId xid = x.id();
  const Real corrupt = fault_is(unary_name(op)) ? Real(1.5) : Real(1);
  return x.tape().record(x.shape(), std::move(out), {xid},
                         [xid, op, constant, corrupt](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto xv = t.value(xid);
    auto gx = t.grad(xid);
    const std::size_t n = g.size();
    switch (op) {
      case UnaryOp::Tanh:
        for (std::size_t i = 0; i < n; ++i) gx[i] += corrupt * g[i] * (Real(1) - y[i] * y[i]);
        break;
      case UnaryOp::Sigmoid:
        for (std::size_t i = 0; i < n; ++i) gx[i] += corrupt * g[i] * y[i] * (Real(1) - y[i]);
        break;
      case UnaryOp::Relu:
        for (std::size_t i = 0; i < n; ++i) {
          if (xv[i] > 0) gx[i] += corrupt * g[i];
        }
        break;
      case UnaryOp::Log:
        for (std::size_t i = 0; i < n; ++i) gx[i] += corrupt * g[i] / xv[i];
        break;
      case UnaryOp::Exp:
        for (std::size_t i = 0; i < n; ++i) gx[i] += corrupt * g[i] * y[i];
        break;
      case UnaryOp::Negate:
        for (std::size_t i = 0; i < n; ++i) gx[i] -= corrupt * g[i];
        break;
      case UnaryOp::Scale:
        K<Real>().axpy(corrupt * constant, g.data(), gx.data(), n);
        break;
    }
  });
}

template <typename Real>
Tensor<Real> apply_binary(Tensor<Real> a, Tensor<Real> b, BinaryOp op) {
  require_same_tape(a, b, "apply_binary");
  if (a.shape() != b.shape()) {
    throw ShapeError("apply_binary: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  const std::size_t n = a.size();
  std::vector<Real> out(n);
  const auto& k = K<Real>();
  switch (op) {
    case BinaryOp::Add: k.add(a.value().data(), b.value().data(), out.data(), n); break;
    case BinaryOp::Sub: k.sub(a.value().data(), b.value().data(), out.data(), n); break;
    case BinaryOp::Mul: k.mul(a.value().data(), b.value().data(), out.data(), n); break;
  }
  const NodeId aid = a.id(), bid = b.id();
  return a.tape().record(a.shape(), std::move(out), {aid, bid},
                         [aid, bid, op](Tape<Real>& t, NodeId self) {
    const auto& k = K<Real>();
    auto g = t.grad(self);
    const std::size_t n = g.size();
    const bool need_a = t.requires_grad(aid);
    const bool need_b = t.requires_grad(bid);
    switch (op) {
      case BinaryOp::Add:
        if (need_a) k.acc(g.data(), t.grad(aid).data(), n);
        if (need_b) k.acc(g.data(), t.grad(bid).data(), n);
        break;
      case BinaryOp::Sub:
        if (need_a) k.acc(g.data(), t.grad(aid).data(), n);
        if (need_b) k.axpy(Real(-1), g.data(), t.grad(bid).data(), n);
        break;
      case BinaryOp::Mul:
        if (need_a) k.mul_acc(g.data(), t.value(bid).data(), t.grad(aid).data(), n);
        if (need_b) k.mul_acc(g.data(), t.value(aid).data(), t.grad(bid).data(), n);
        break;
    }
  });
}

template <typename Real>
Tensor<Real> matvec_cols(Tensor<Real> w, Tensor<Real> x, std::size_t col_begin) {
  require_same_tape(w, x, "matvec");
  if (w.shape().rank() != 2) throw ShapeError("matvec: W must be rank-2, got " + w.shape().str());
  require_vector(x, "matvec");
  const std::size_t rows = w.shape().rows();
  const std::size_t ld = w.shape().cols();
  const std::size_t cols = x.size();
  if (col_begin + cols > ld) {
    throw ShapeError("matvec: W " + w.shape().str() + " columns [" + std::to_string(col_begin) +
                     ", " + std::to_string(col_begin + cols) + ") do not fit x " +
                     x.shape().str());
  }
  std::vector<Real> out(rows);
  simd::gemv(K<Real>(), rows, cols, w.value().data() + col_begin, ld, x.value().data(),
             out.data());
  const NodeId wid = w.id(), xid = x.id();
  return w.tape().record(Shape::vector(rows), std::move(out), {wid, xid},
                         [wid, xid, rows, cols, ld, col_begin](Tape<Real>& t, NodeId self) {
    const auto& k = K<Real>();
    auto g = t.grad(self);
    if (t.requires_grad(wid)) {
      simd::ger_acc(k, rows, cols, g.data(), t.value(xid).data(),
                    t.grad(wid).data() + col_begin, ld);
    }
    if (t.requires_grad(xid)) {
      simd::gemv_t_acc(k, rows, cols, t.value(wid).data() + col_begin, ld, g.data(),
                       t.grad(xid).data());
    }
  });
}

template <typename Real>
Tensor<Real> matvec(Tensor<Real> w, Tensor<Real> x) {
  if (w.valid() && x.valid() && w.shape().rank() == 2 && w.shape().cols() != x.size()) {
    throw ShapeError("matvec: W " + w.shape().str() + " incompatible with x " + x.shape().str());
  }
  return matvec_cols(w, x, 0);
}

template <typename Real>
Tensor<Real> concat(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw ArgumentError("concat: empty list of parts");
  std::vector<NodeId> ids;
  std::vector<std::size_t> offsets;
  ids.reserve(parts.size());
  offsets.reserve(parts.size());
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_same_tape(parts.front(), p, "concat");
    require_vector(p, "concat");
    ids.push_back(p.id());
    offsets.push_back(total);
    total += p.size();
  }
  std::vector<Real> out;
  out.reserve(total);
  for (const auto& p : parts) {
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  auto& tape = parts.front().tape();
  return tape.record(Shape::vector(total), std::move(out), std::span<const NodeId>(ids),
                     [ids, offsets](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (!t.requires_grad(ids[p])) continue;
      auto gp = t.grad(ids[p]);
      K<Real>().acc(g.data() + offsets[p], gp.data(), gp.size());
    }
  });
}

template <typename Real>
Tensor<Real> slice(Tensor<Real> x, std::size_t offset, std::size_t length) {
  require_vector(x, "slice");
  if (offset + length > x.size() || length == 0) {
    throw ShapeError("slice: [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") out of range for " + x.shape().str());
  }
  auto v = x.value();
  std::vector<Real> out(v.begin() + static_cast<std::ptrdiff_t>(offset),
                        v.begin() + static_cast<std::ptrdiff_t>(offset + length));
  const NodeId xid = x.id();
  return x.tape().record(Shape::vector(length), std::move(out), {xid},
                         [xid, offset](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    K<Real>().acc(g.data(), t.grad(xid).data() + offset, g.size());
  });
}

template <typename Real>
Tensor<Real> softmax(Tensor<Real> x, const Mask& mask) {
  require_vector(x, "softmax");
  auto v = x.value();
  const std::size_t n = v.size();
  if (!mask.empty() && mask.size() != n) {
    throw ShapeError("softmax: mask length " + std::to_string(mask.size()) +
                     " does not match input " + x.shape().str());
  }
  auto on = [&mask](std::size_t i) { return mask.empty() || mask[i]; };
  Real mx = -std::numeric_limits<Real>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (on(i)) {
      mx = any ? std::max(mx, v[i]) : v[i];
      any = true;
    }
  }
  if (!any) throw ArgumentError("softmax: all positions are masked");
  std::vector<Real> out(n, Real(0));
  Real z = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (on(i)) {
      out[i] = std::exp(v[i] - mx);
      z += out[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  const NodeId xid = x.id();
  return x.tape().record(x.shape(), std::move(out), {xid}, [xid](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto gx = t.grad(xid);
    const Real inner = K<Real>().dot(g.data(), y.data(), g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] != Real(0)) gx[i] += y[i] * (g[i] - inner);
    }
  });
}

template <typename Real>
Tensor<Real> weighted_sum(Tensor<Real> weights, std::span<const Tensor<Real>> vectors) {
  require_vector(weights, "weighted_sum");
  if (weights.size() != vectors.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(vectors.size()) + " vectors");
  }
  if (vectors.empty()) throw ArgumentError("weighted_sum: no vectors");
  const std::size_t dim = vectors.front().size();
  std::vector<NodeId> ids{weights.id()};
  for (const auto& v : vectors) {
    require_same_tape(weights, v, "weighted_sum");
    require_vector(v, "weighted_sum");
    if (v.size() != dim) {
      throw ShapeError("weighted_sum: vectors differ in length (" + std::to_string(dim) +
                       " vs " + std::to_string(v.size()) + ")");
    }
    ids.push_back(v.id());
  }
  const auto& k = K<Real>();
  std::vector<Real> out(dim, Real(0));
  auto w = weights.value();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    k.axpy(w[i], vectors[i].value().data(), out.data(), dim);
  }
  return weights.tape().record(Shape::vector(dim), std::move(out), std::span<const NodeId>(ids),
                               [ids, dim](Tape<Real>& t, NodeId self) {
    const auto& k = K<Real>();
    auto g = t.grad(self);
    const NodeId wid = ids[0];
    const bool need_w = t.requires_grad(wid);
    auto w = t.value(wid);
    for (std::size_t i = 1; i < ids.size(); ++i) {
      if (need_w) t.grad(wid)[i - 1] += k.dot(g.data(), t.value(ids[i]).data(), dim);
      if (t.requires_grad(ids[i]) && w[i - 1] != Real(0)) {
        k.axpy(w[i - 1], g.data(), t.grad(ids[i]).data(), dim);
      }
    }
  });
}

template <typename Real>
Tensor<Real> sum(Tensor<Real> x) {
  Real s = 0;
  for (Real v : x.value()) s += v;
  const NodeId xid = x.id();
  return x.tape().record(Shape::scalar(), {s}, {xid}, [xid](Tape<Real>& t, NodeId self) {
    const Real g = t.grad(self)[0];
    for (Real& gx : t.grad(xid)) gx += g;
  });
}

template <typename Real>
Tensor<Real> dot(Tensor<Real> a, Tensor<Real> b) {
  require_same_tape(a, b, "dot");
  if (a.size() != b.size()) {
    throw ShapeError("dot: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  const Real d = K<Real>().dot(a.value().data(), b.value().data(), a.size());
  const NodeId aid = a.id(), bid = b.id();
  return a.tape().record(Shape::scalar(), {d}, {aid, bid}, [aid, bid](Tape<Real>& t, NodeId self) {
    const Real g = t.grad(self)[0];
    const auto& k = K<Real>();
    if (t.requires_grad(aid)) k.axpy(g, t.value(bid).data(), t.grad(aid).data(), t.grad(aid).size());
    if (t.requires_grad(bid)) k.axpy(g, t.value(aid).data(), t.grad(bid).data(), t.grad(bid).size());
  });
}

template <typename Real>
Tensor<Real> pick(Tensor<Real> x, std::size_t index) {
  if (index >= x.size()) {
    throw ShapeError("pick: index " + std::to_string(index) + " out of range for " +
                     x.shape().str());
  }
  const NodeId xid = x.id();
  return x.tape().record(Shape::scalar(), {x.value()[index]}, {xid},
                         [xid, index](Tape<Real>& t, NodeId self) {
    t.grad(xid)[index] += t.grad(self)[0];
  });
}

template <typename Real>
Tensor<Real> clamp_min(Tensor<Real> x, Real floor) {
  auto v = x.value();
  std::vector<Real> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] < floor ? floor : v[i];
  const NodeId xid = x.id();
  return x.tape().record(x.shape(), std::move(out), {xid}, [xid, floor](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    auto xv = t.value(xid);
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(xv[i] < floor)) gx[i] += g[i];
    }
  });
}

#define STANCEGEN_INSTANTIATE_OPS(Real)                                                   \
  template Tensor<Real> apply_unary(Tensor<Real>, UnaryOp, Real);                         \
  template Tensor<Real> apply_binary(Tensor<Real>, Tensor<Real>, BinaryOp);               \
  template Tensor<Real> matvec(Tensor<Real>, Tensor<Real>);                               \
  template Tensor<Real> matvec_cols(Tensor<Real>, Tensor<Real>, std::size_t);             \
  template Tensor<Real> concat(std::span<const Tensor<Real>>);                            \
  template Tensor<Real> slice(Tensor<Real>, std::size_t, std::size_t);                    \
  template Tensor<Real> softmax(Tensor<Real>, const Mask&);                               \
  template Tensor<Real> weighted_sum(Tensor<Real>, std::span<const Tensor<Real>>);        \
  template Tensor<Real> sum(Tensor<Real>);                                                \
  template Tensor<Real> dot(Tensor<Real>, Tensor<Real>);                                  \
  template Tensor<Real> pick(Tensor<Real>, std::size_t);                                  \
  template Tensor<Real> clamp_min(Tensor<Real>, Real);

STANCEGEN_INSTANTIATE_OPS(float)
STANCEGEN_INSTANTIATE_OPS(double)

#undef STANCEGEN_INSTANTIATE_OPS

}  // namespace ops

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// Gradient checking

double finite_difference_check(const std::function<Tensor<double>(Tape<double>&)>& f,
                               std::span<Parameter<double>* const> params, double eps) {
  return finite_difference_check(f, f, params, eps);
}

double finite_difference_check(const std::function<Tensor<double>(Tape<double>&)>& analytic,
                               const std::function<Tensor<double>(Tape<double>&)>& numeric,
                               std::span<Parameter<double>* const> params, double eps) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto root = analytic(tape);
    tape.backward(root);
  }
  auto evaluate = [&numeric]() {
    Tape<double> tape(false);
    return numeric(tape).item();
  };
  double worst = 0.0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate();
      p->value[i] = saved - eps;
      const double down = evaluate();
      p->value[i] = saved;
      const double num = (up - down) / (2.0 * eps);
      const double ana = p->grad[i];
      const double err = std::abs(ana - num) / (std::abs(ana) + std::abs(num) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace stancegen
