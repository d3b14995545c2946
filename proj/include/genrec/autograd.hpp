#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "genrec/common.hpp"
#include "genrec/tensor.hpp"

namespace genrec::ag {

// Handle to a node on a Tape. Carries the owning tape's tag so handles from
// another (or a reset) tape are rejected.
struct Var {
  int id = -1;
  uint64_t tag = 0;
};

// Reverse-mode tape over dense row-major matrices. Nodes are appended in
// evaluation order; backward() walks them once in reverse. A tape supports
// exactly one backward pass; a second call throws (re-run the forward on a
// fresh tape instead).
template <class S>
class Tape {
 public:
  using Matrix = Mat<S>;
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Values are copied in.
  Var constant(Matrix value);
  // Borrows `value`, which must outlive the tape.
  Var constant_ref(const Matrix& value);
  // Borrows `value`; gradients accumulate into `*grad_sink` (same shape).
  Var parameter(const Matrix& value, Matrix* grad_sink);

  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward);

  const Matrix& value(Var v) const;
  bool needs_grad(Var v) const { return node(v).needs_grad; }

  // Accumulates `g` into v's gradient (no-op for nodes without gradient).
  template <class Expr>
  void accumulate(Var v, const Expr& g);

  // Gradient of an intermediate node after backward(); zero-size if the node
  // received no gradient.
  const Matrix& grad(Var v) const { return node(v).grad; }

  void backward(Var loss);
  bool backward_done() const { return backward_done_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* ext = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  uint64_t tag_;
  bool backward_done_ = false;
};

template <class S>
template <class Expr>
void Tape<S>::accumulate(Var v, const Expr& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  Matrix& target = n.sink ? *n.sink : n.grad;
  if (target.size() == 0) {
    target = g;
  } else {
    target += g;
  }
}

// ---- operations ----------------------------------------------------------
// Shapes: a is T x n unless noted. Scalars are 1 x 1 matrices.

template <class S> Var matmul(Tape<S>& t, Var a, Var b);        // a * b
template <class S> Var matmul_nt(Tape<S>& t, Var a, Var b);     // a * b^T
template <class S> Var add(Tape<S>& t, Var a, Var b);           // same shape
template <class S> Var add_bias(Tape<S>& t, Var x, Var bias);   // bias: 1 x n, broadcast over rows
template <class S> Var scale(Tape<S>& t, Var x, S factor);
template <class S> Var gather_rows(Tape<S>& t, Var table, std::span<const int> rows);
template <class S> Var layer_norm(Tape<S>& t, Var x, Var gain, Var bias, S eps = S(1e-5));
template <class S> Var gelu(Tape<S>& t, Var x);                 // tanh approximation
template <class S> Var causal_attention(Tape<S>& t, Var q, Var k, Var v, int n_heads);
template <class S> Var dropout(Tape<S>& t, Var x, double p, Rng& rng);
template <class S> Var select_row(Tape<S>& t, Var x, int row);
template <class S> Var concat_rows(Tape<S>& t, std::span<const Var> parts);
template <class S> Var l2_normalize_rows(Tape<S>& t, Var x, S eps = S(1e-12));
template <class S> Var sum(Tape<S>& t, Var x);

// Mean over selected rows of -log softmax(logits[r])[targets[r]]. Rows with
// target < 0 are skipped. `excluded`, when non-empty, is a rows x cols 0/1
// mask of logits dropped from the normaliser. Throws if no row is selected.
template <class S>
Var softmax_cross_entropy(Tape<S>& t, Var logits, std::span<const int> targets,
                          const Mat<S>* excluded = nullptr);

// sum_i coeffs[i] * parts[i] over scalar nodes.
template <class S> Var linear_combination(Tape<S>& t, std::span<const Var> parts, std::span<const S> coeffs);

}  // namespace genrec::ag
