#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "dmatch/tensor.hpp"

namespace dmatch {

// Thrown when an op produces a non-finite result. The trainer treats this as
// divergence of the run, not as a programming error.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

class Tape;

// Handle to a node on a tape. Cheap to copy; must not outlive its tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Tensor grad() const;  // zeros of value shape if nothing was accumulated
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  Var(Tape* tape, int node) : tape_(tape), node_(node) {}
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Define-by-run reverse-mode tape. Rebuilt for every forward pass; nodes are
// appended in evaluation order, so the index order is already topological and
// the backward sweep is a single deterministic reverse scan.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Custom node with an explicit adjoint. requires_grad is inherited from the
  // parents; pass an empty parent list for constants.
  Var make_node(Tensor value, std::vector<int> parents, BackwardFn backward);

  // root must be scalar (1x1). Errors on a second call for the same tape.
  void backward(const Var& root);
  bool backward_done() const { return backward_done_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  const Tensor& value_of(int node) const;
  const Tensor& grad_of(int node) const;  // zeros if nothing accumulated yet
  bool node_requires_grad(int node) const;
  void accum_grad(int node, const Tensor& contribution);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool grad_set = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
  mutable Tensor zero_scratch_;

  Node& node_at(int idx);
  const Node& node_at(int idx) const;
};

// Elementwise / structural primitives. Binary elementwise ops broadcast a
// scalar (1x1) or a row vector (1xN) against a matrix; richer broadcasts are
// rejected so every adjoint stays a plain sum over the broadcast rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);  // domain error on non-positive entries
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var square(Var a);
Var sqrt(Var a);  // domain error on negative entries
Var clamp(Var a, double lo, double hi);

Var matmul(Var a, Var b);
Var transpose(Var a);

// axis = -1: reduce everything to 1x1. axis = 0: collapse rows to 1xN.
// axis = 1: collapse columns to Mx1.
Var sum(Var a, int axis = -1);
Var mean(Var a, int axis = -1);

Var slice_cols(Var a, int start, int count);
Var concat_cols(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);

// Identity value, no gradient flow.
Var detach(Var a);

// z = mu + exp(0.5 * logvar) * eps with caller-supplied eps.
Var reparameterized_sample(Var mu, Var logvar, const Tensor& eps);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator+(Var a, double c);
Var operator-(Var a, double c);

// Raw tensor helpers shared by forward values and adjoints.
Tensor matmul_value(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose_value(const Tensor& a);

}  // namespace dmatch
