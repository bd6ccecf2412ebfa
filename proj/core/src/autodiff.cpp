#include "dmatch/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace dmatch {

namespace {

void require_finite(const Tensor& t, const char* op) {
  if (!all_finite(t)) throw NonFiniteError(std::string(op) + ": non-finite result");
}

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::logic_error(std::string(op) + ": null Var");
  if (a.tape() != b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

void require_valid(const Var& a, const char* op) {
  if (!a.valid()) throw std::logic_error(std::string(op) + ": null Var");
}

struct BroadcastPlan {
  int rows = 0, cols = 0;
};

// Legal pairings: identical shapes, scalar (1x1) against anything, or a row
// vector (1xN) against an MxN matrix (either side).
BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
  auto compatible = [](const Tensor& small, const Tensor& big) {
    if (small.is_scalar()) return true;
    return small.rows() == 1 && small.cols() == big.cols();
  };
  if (a.same_shape(b)) return {a.rows(), a.cols()};
  if (compatible(a, b)) return {b.rows(), b.cols()};
  if (compatible(b, a)) return {a.rows(), a.cols()};
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() +
                              " and " + b.shape_string());
}

inline double pick(const Tensor& t, int i, int j) {
  const int r = t.rows() == 1 ? 0 : i;
  const int c = t.cols() == 1 ? 0 : j;
  return t.data()[static_cast<size_t>(r) * t.cols() + c];
}

template <class F>
Tensor binary_ew(const Tensor& a, const Tensor& b, F f, const char* op) {
  const BroadcastPlan p = broadcast_plan(a, b, op);
  Tensor out(p.rows, p.cols);
  double* o = out.data();
  for (int i = 0; i < p.rows; ++i)
    for (int j = 0; j < p.cols; ++j) *o++ = f(pick(a, i, j), pick(b, i, j));
  require_finite(out, op);
  return out;
}

// Sum a full-shape gradient down to the (possibly broadcast) operand shape.
Tensor reduce_to_shape(const Tensor& g, int rows, int cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) {
    double s = 0.0;
    for (double v : g.values()) s += v;
    return Tensor::unchecked(1, 1, {s});
  }
  if (rows == 1 && cols == g.cols()) {
    Tensor out(1, cols);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < cols; ++j) out.at(0, j) += g.at(i, j);
    return out;
  }
  throw std::logic_error("reduce_to_shape: unsupported reduction");
}

template <class F>
Tensor unary_ew(const Tensor& a, F f, const char* op) {
  Tensor out(a.rows(), a.cols());
  double* o = out.data();
  const double* in = a.data();
  for (int i = 0; i < a.size(); ++i) o[i] = f(in[i]);
  require_finite(out, op);
  return out;
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const {
  if (!valid()) throw std::logic_error("Var::value on null Var");
  return tape_->value_of(node_);
}

Tensor Var::grad() const {
  if (!valid()) throw std::logic_error("Var::grad on null Var");
  return tape_->grad_of(node_);
}

bool Var::requires_grad() const {
  if (!valid()) throw std::logic_error("Var::requires_grad on null Var");
  return tape_->node_requires_grad(node_);
}

Tape::Node& Tape::node_at(int idx) {
  if (idx < 0 || idx >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Tape: node index out of range");
  return nodes_[idx];
}

const Tape::Node& Tape::node_at(int idx) const {
  if (idx < 0 || idx >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Tape: node index out of range");
  return nodes_[idx];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::make_node(Tensor value, std::vector<int> parents, BackwardFn backward) {
  bool needs_grad = false;
  for (int p : parents) needs_grad = needs_grad || node_at(p).requires_grad;
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw std::logic_error("Tape::backward: root from another tape");
  if (backward_done_) throw std::logic_error("Tape::backward: called twice on the same tape");
  const Node& r = node_at(root.node());
  if (!r.value.is_scalar())
    throw std::invalid_argument("Tape::backward: root must be scalar, got " +
                                r.value.shape_string());
  backward_done_ = true;
  accum_grad(root.node(), Tensor::scalar(1.0));
  for (int i = root.node(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad_set || !n.backward) continue;
    n.backward(*this, i);
  }
}

const Tensor& Tape::value_of(int node) const { return node_at(node).value; }

const Tensor& Tape::grad_of(int node) const {
  const Node& n = node_at(node);
  if (n.grad_set) return n.grad;
  zero_scratch_ = Tensor(n.value.rows(), n.value.cols());
  return zero_scratch_;
}

bool Tape::node_requires_grad(int node) const { return node_at(node).requires_grad; }

void Tape::accum_grad(int node, const Tensor& contribution) {
  Node& n = node_at(node);
  if (!n.requires_grad) return;
  if (!contribution.same_shape(n.value))
    throw std::logic_error("Tape::accum_grad: contribution shape " + contribution.shape_string() +
                           " vs value " + n.value.shape_string());
  if (!n.grad_set) {
    n.grad = contribution;
    n.grad_set = true;
    return;
  }
  double* g = n.grad.data();
  const double* c = contribution.data();
  for (int i = 0; i < n.grad.size(); ++i) g[i] += c[i];
}

// ---- binary elementwise ----

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape();
  Tensor out = binary_ew(a.value(), b.value(), [](double x, double y) { return x + y; }, "add");
  const int ia = a.node(), ib = b.node();
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ia);
    const Tensor& bv = tp.value_of(ib);
    if (tp.node_requires_grad(ia)) tp.accum_grad(ia, reduce_to_shape(g, av.rows(), av.cols()));
    if (tp.node_requires_grad(ib)) tp.accum_grad(ib, reduce_to_shape(g, bv.rows(), bv.cols()));
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape();
  Tensor out = binary_ew(a.value(), b.value(), [](double x, double y) { return x - y; }, "sub");
  const int ia = a.node(), ib = b.node();
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ia);
    const Tensor& bv = tp.value_of(ib);
    if (tp.node_requires_grad(ia)) tp.accum_grad(ia, reduce_to_shape(g, av.rows(), av.cols()));
    if (tp.node_requires_grad(ib)) {
      Tensor neg_g(g.rows(), g.cols());
      for (int i = 0; i < g.size(); ++i) neg_g.data()[i] = -g.data()[i];
      tp.accum_grad(ib, reduce_to_shape(neg_g, bv.rows(), bv.cols()));
    }
  });
}

namespace {

// Shared by mul and div: accumulate reduce(g * factor) where factor is the
// full-shape local derivative for the operand.
template <class F>
void accum_scaled(Tape& tp, int target, const Tensor& g, F local) {
  const Tensor& tv = tp.value_of(target);
  Tensor contrib(g.rows(), g.cols());
  double* c = contrib.data();
  const double* gd = g.data();
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j, ++c, ++gd) *c = *gd * local(i, j);
  tp.accum_grad(target, reduce_to_shape(contrib, tv.rows(), tv.cols()));
}

}  // namespace

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tape& t = *a.tape();
  Tensor out = binary_ew(a.value(), b.value(), [](double x, double y) { return x * y; }, "mul");
  const int ia = a.node(), ib = b.node();
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ia);
    const Tensor& bv = tp.value_of(ib);
    if (tp.node_requires_grad(ia))
      accum_scaled(tp, ia, g, [&](int i, int j) { return pick(bv, i, j); });
    if (tp.node_requires_grad(ib))
      accum_scaled(tp, ib, g, [&](int i, int j) { return pick(av, i, j); });
  });
}

Var div(Var a, Var b) {
  require_same_tape(a, b, "div");
  Tape& t = *a.tape();
  Tensor out = binary_ew(a.value(), b.value(), [](double x, double y) { return x / y; }, "div");
  const int ia = a.node(), ib = b.node();
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ia);
    const Tensor& bv = tp.value_of(ib);
    if (tp.node_requires_grad(ia))
      accum_scaled(tp, ia, g, [&](int i, int j) { return 1.0 / pick(bv, i, j); });
    if (tp.node_requires_grad(ib))
      accum_scaled(tp, ib, g, [&](int i, int j) {
        const double y = pick(bv, i, j);
        return -pick(av, i, j) / (y * y);
      });
  });
}

Var scale(Var a, double c) {
  require_valid(a, "scale");
  Tape& t = *a.tape();
  Tensor out = unary_ew(a.value(), [c](double x) { return c * x; }, "scale");
  const int ia = a.node();
  return t.make_node(std::move(out), {ia}, [ia, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor contrib(g.rows(), g.cols());
    for (int i = 0; i < g.size(); ++i) contrib.data()[i] = c * g.data()[i];
    tp.accum_grad(ia, contrib);
  });
}

Var neg(Var a) { return scale(a, -1.0); }

// ---- unary elementwise ----

namespace {

// deriv(input, output) -> local derivative; keeps each adjoint a one-liner.
template <class Deriv>
Var unary_op([[maybe_unused]] const char* name, Var a, Tensor value, Deriv deriv) {
  Tape& t = *a.tape();
  const int ia = a.node();
  return t.make_node(std::move(value), {ia}, [ia, deriv](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& in = tp.value_of(ia);
    const Tensor& out = tp.value_of(self);
    Tensor contrib(g.rows(), g.cols());
    for (int i = 0; i < g.size(); ++i)
      contrib.data()[i] = g.data()[i] * deriv(in.data()[i], out.data()[i]);
    tp.accum_grad(ia, contrib);
  });
}

}  // namespace

Var exp(Var a) {
  require_valid(a, "exp");
  Tensor out = unary_ew(a.value(), [](double x) { return std::exp(x); }, "exp");
  return unary_op("exp", a, std::move(out), [](double, double y) { return y; });
}

Var log(Var a) {
  require_valid(a, "log");
  for (double v : a.value().values())
    if (v <= 0.0) throw std::domain_error("log: non-positive entry");
  Tensor out = unary_ew(a.value(), [](double x) { return std::log(x); }, "log");
  return unary_op("log", a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  require_valid(a, "tanh");
  Tensor out = unary_ew(a.value(), [](double x) { return std::tanh(x); }, "tanh");
  return unary_op("tanh", a, std::move(out), [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  require_valid(a, "relu");
  Tensor out = unary_ew(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }, "relu");
  return unary_op("relu", a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  require_valid(a, "softplus");
  Tensor out = unary_ew(a.value(), stable_softplus, "softplus");
  return unary_op("softplus", a, std::move(out), [](double x, double) { return sigmoid(x); });
}

Var square(Var a) {
  require_valid(a, "square");
  Tensor out = unary_ew(a.value(), [](double x) { return x * x; }, "square");
  return unary_op("square", a, std::move(out), [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  require_valid(a, "sqrt");
  for (double v : a.value().values())
    if (v < 0.0) throw std::domain_error("sqrt: negative entry");
  Tensor out = unary_ew(a.value(), [](double x) { return std::sqrt(x); }, "sqrt");
  return unary_op("sqrt", a, std::move(out), [](double, double y) { return 0.5 / y; });
}

Var clamp(Var a, double lo, double hi) {
  require_valid(a, "clamp");
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Tensor out = unary_ew(a.value(), [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
                        "clamp");
  return unary_op("clamp", a, std::move(out),
                  [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---- matrix ops ----

Tensor matmul_value(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions " + a.shape_string() + " x " +
                                b.shape_string());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  const double* ad = a.data();
  const double* bd = b.data();
  double* od = out.data();
  for (int i = 0; i < m; ++i) {
    double* orow = od + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ad[static_cast<size_t>(i) * k + kk];
      if (av == 0.0) continue;
      const double* brow = bd + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out(m, n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * k;
    double* orow = out.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b.data() + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      orow[j] = s;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(k, n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * k;
    const double* brow = b.data() + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* orow = out.data() + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose_value(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  Tensor out = matmul_value(a.value(), b.value());
  require_finite(out, "matmul");
  const int ia = a.node(), ib = b.node();
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.node_requires_grad(ia)) tp.accum_grad(ia, matmul_nt(g, tp.value_of(ib)));
    if (tp.node_requires_grad(ib)) tp.accum_grad(ib, matmul_tn(tp.value_of(ia), g));
  });
}

Var transpose(Var a) {
  require_valid(a, "transpose");
  Tape& t = *a.tape();
  const int ia = a.node();
  return t.make_node(transpose_value(a.value()), {ia}, [ia](Tape& tp, int self) {
    tp.accum_grad(ia, transpose_value(tp.grad_of(self)));
  });
}

// ---- reductions ----

namespace {

Tensor reduce_value(const Tensor& a, int axis, bool take_mean, const char* op) {
  if (axis == -1) {
    if (take_mean && a.size() == 0) throw std::domain_error(std::string(op) + ": mean of empty tensor");
    double s = 0.0;
    for (double v : a.values()) s += v;
    if (take_mean) s /= a.size();
    return Tensor::scalar(s);
  }
  if (axis == 0) {
    if (take_mean && a.rows() == 0) throw std::domain_error(std::string(op) + ": mean over empty axis");
    Tensor out(1, a.cols());
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < a.cols(); ++j) out.at(0, j) += a.at(i, j);
    if (take_mean)
      for (int j = 0; j < a.cols(); ++j) out.at(0, j) /= a.rows();
    return out;
  }
  if (axis == 1) {
    if (take_mean && a.cols() == 0) throw std::domain_error(std::string(op) + ": mean over empty axis");
    Tensor out(a.rows(), 1);
    for (int i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < a.cols(); ++j) s += a.at(i, j);
      out.at(i, 0) = take_mean ? s / a.cols() : s;
    }
    return out;
  }
  throw std::invalid_argument(std::string(op) + ": invalid axis " + std::to_string(axis));
}

Var reduce_op(Var a, int axis, bool take_mean, const char* op) {
  require_valid(a, op);
  Tape& t = *a.tape();
  Tensor out = reduce_value(a.value(), axis, take_mean, op);
  require_finite(out, op);
  const int ia = a.node();
  const int rows = a.value().rows(), cols = a.value().cols();
  return t.make_node(std::move(out), {ia}, [ia, axis, take_mean, rows, cols](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor contrib(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double gv;
        if (axis == -1) gv = g.at(0, 0) / (take_mean ? rows * cols : 1);
        else if (axis == 0) gv = g.at(0, j) / (take_mean ? rows : 1);
        else gv = g.at(i, 0) / (take_mean ? cols : 1);
        contrib.at(i, j) = gv;
      }
    tp.accum_grad(ia, contrib);
  });
}

}  // namespace

Var sum(Var a, int axis) { return reduce_op(a, axis, false, "sum"); }
Var mean(Var a, int axis) { return reduce_op(a, axis, true, "mean"); }

// ---- structural ----

Var slice_cols(Var a, int start, int count) {
  require_valid(a, "slice_cols");
  const Tensor& v = a.value();
  if (start < 0 || count < 0 || start + count > v.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") on " + v.shape_string());
  Tape& t = *a.tape();
  Tensor out(v.rows(), count);
  for (int i = 0; i < v.rows(); ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = v.at(i, start + j);
  const int ia = a.node(), rows = v.rows(), cols = v.cols();
  return t.make_node(std::move(out), {ia}, [ia, start, count, rows, cols](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor contrib(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < count; ++j) contrib.at(i, start + j) = g.at(i, j);
    tp.accum_grad(ia, contrib);
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows())
    throw std::invalid_argument("concat_cols: row mismatch " + av.shape_string() + " vs " +
                                bv.shape_string());
  Tape& t = *a.tape();
  Tensor out(av.rows(), av.cols() + bv.cols());
  for (int i = 0; i < av.rows(); ++i) {
    for (int j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
    for (int j = 0; j < bv.cols(); ++j) out.at(i, av.cols() + j) = bv.at(i, j);
  }
  const int ia = a.node(), ib = b.node();
  const int ra = av.rows(), ca = av.cols(), cb = bv.cols();
  return t.make_node(std::move(out), {ia, ib}, [ia, ib, ra, ca, cb](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.node_requires_grad(ia)) {
      Tensor ga(ra, ca);
      for (int i = 0; i < ra; ++i)
        for (int j = 0; j < ca; ++j) ga.at(i, j) = g.at(i, j);
      tp.accum_grad(ia, ga);
    }
    if (tp.node_requires_grad(ib)) {
      Tensor gb(ra, cb);
      for (int i = 0; i < ra; ++i)
        for (int j = 0; j < cb; ++j) gb.at(i, j) = g.at(i, ca + j);
      tp.accum_grad(ib, gb);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = *parts[0].tape();
  int rows = 0;
  const int cols = parts[0].value().cols();
  std::vector<int> idx;
  std::vector<int> offsets;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    if (p.value().cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    offsets.push_back(rows);
    rows += p.value().rows();
    idx.push_back(p.node());
  }
  Tensor out(rows, cols);
  for (size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < cols; ++j) out.at(offsets[k] + i, j) = v.at(i, j);
  }
  return t.make_node(std::move(out), idx, [idx, offsets, cols](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    for (size_t k = 0; k < idx.size(); ++k) {
      if (!tp.node_requires_grad(idx[k])) continue;
      const int r = tp.value_of(idx[k]).rows();
      Tensor gk(r, cols);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < cols; ++j) gk.at(i, j) = g.at(offsets[k] + i, j);
      tp.accum_grad(idx[k], gk);
    }
  });
}

Var detach(Var a) {
  require_valid(a, "detach");
  return a.tape()->leaf(a.value(), false);
}

Var reparameterized_sample(Var mu, Var logvar, const Tensor& eps) {
  require_same_tape(mu, logvar, "reparameterized_sample");
  if (!mu.value().same_shape(logvar.value()) || !mu.value().same_shape(eps))
    throw std::invalid_argument("reparameterized_sample: shape mismatch");
  Tape& t = *mu.tape();
  Var sigma = exp(scale(logvar, 0.5));
  return add(mu, mul(sigma, t.constant(eps)));
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator*(Var a, double c) { return scale(a, c); }
Var operator*(double c, Var a) { return scale(a, c); }
Var operator+(Var a, double c) {
  require_valid(a, "operator+");
  return add(a, a.tape()->constant(Tensor::scalar(c)));
}
Var operator-(Var a, double c) { return a + (-c); }

}  // namespace dmatch
