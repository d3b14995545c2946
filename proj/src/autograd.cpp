#include "genrec/autograd.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace genrec::ag {

namespace {

std::atomic<uint64_t> g_next_tag{1};

template <class S>
Mat<S>* grad_target(Tape<S>& t, Var v, Eigen::Index rows, Eigen::Index cols, Mat<S>& scratch) {
  // Row-sparse ops accumulate into a scratch buffer and flush it once.
  if (!t.needs_grad(v)) return nullptr;
  scratch = Mat<S>::Zero(rows, cols);
  return &scratch;
}

}  // namespace

template <class S>
Tape<S>::Tape() : tag_(g_next_tag.fetch_add(1)) {}

template <class S>
const typename Tape<S>::Node& Tape<S>::node(Var v) const {
  if (v.tag != tag_ || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
    throw Error("detached_graph", "variable does not belong to this tape");
  return nodes_[static_cast<size_t>(v.id)];
}

template <class S>
typename Tape<S>::Node& Tape<S>::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

template <class S>
Var Tape<S>::constant(Matrix value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1, tag_};
}

template <class S>
Var Tape<S>::constant_ref(const Matrix& value) {
  Node n;
  n.ext = &value;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1, tag_};
}

template <class S>
Var Tape<S>::parameter(const Matrix& value, Matrix* grad_sink) {
  if (grad_sink && (grad_sink->rows() != value.rows() || grad_sink->cols() != value.cols()))
    throw Error("shape_mismatch", "gradient sink shape differs from parameter shape");
  Node n;
  n.ext = &value;
  n.sink = grad_sink;
  n.needs_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1, tag_};
}

template <class S>
Var Tape<S>::record(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  if (backward_done_) throw Error("tape_consumed", "cannot record onto a tape after backward()");
  Node n;
  n.own = std::move(value);
  for (const Var& in : inputs) n.needs_grad = n.needs_grad || node(in).needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1, tag_};
}

template <class S>
const typename Tape<S>::Matrix& Tape<S>::value(Var v) const {
  const Node& n = node(v);
  return n.ext ? *n.ext : n.own;
}

template <class S>
void Tape<S>::backward(Var loss) {
  Node& l = node(loss);
  if (backward_done_) throw Error("backward_twice", "backward() already ran on this tape; re-run forward");
  const Matrix& lv = l.ext ? *l.ext : l.own;
  if (lv.rows() != 1 || lv.cols() != 1) throw Error("shape_mismatch", "backward() needs a scalar loss");
  if (!l.needs_grad) throw Error("detached_graph", "loss does not depend on any trainable parameter");
  backward_done_ = true;
  if (l.sink) {
    (*l.sink)(0, 0) += S(1);
    return;
  }
  l.grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

// ---- ops -----------------------------------------------------------------

template <class S>
Var matmul(Tape<S>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.cols() != B.rows()) throw Error("shape_mismatch", "matmul inner dimensions differ");
  Mat<S> out;
  out.noalias() = A * B;
  return t.record(std::move(out), {a, b}, [a, b](Tape<S>& tp, const Mat<S>& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, (g * tp.value(b).transpose()).eval());
    if (tp.needs_grad(b)) tp.accumulate(b, (tp.value(a).transpose() * g).eval());
  });
}

template <class S>
Var matmul_nt(Tape<S>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.cols() != B.cols()) throw Error("shape_mismatch", "matmul_nt inner dimensions differ");
  Mat<S> out;
  out.noalias() = A * B.transpose();
  return t.record(std::move(out), {a, b}, [a, b](Tape<S>& tp, const Mat<S>& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, (g * tp.value(b)).eval());
    if (tp.needs_grad(b)) tp.accumulate(b, (g.transpose() * tp.value(a)).eval());
  });
}

template <class S>
Var add(Tape<S>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw Error("shape_mismatch", "add shapes differ");
  return t.record(A + B, {a, b}, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <class S>
Var add_bias(Tape<S>& t, Var x, Var bias) {
  const auto& X = t.value(x);
  const auto& B = t.value(bias);
  if (B.rows() != 1 || B.cols() != X.cols()) throw Error("shape_mismatch", "bias must be 1 x cols");
  Mat<S> out = X.rowwise() + B.row(0);
  return t.record(std::move(out), {x, bias}, [x, bias](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x, g);
    if (tp.needs_grad(bias)) tp.accumulate(bias, Mat<S>(g.colwise().sum()));
  });
}

template <class S>
Var scale(Tape<S>& t, Var x, S factor) {
  return t.record(t.value(x) * factor, {x},
                  [x, factor](Tape<S>& tp, const Mat<S>& g) { tp.accumulate(x, (g * factor).eval()); });
}

template <class S>
Var gather_rows(Tape<S>& t, Var table, std::span<const int> rows) {
  const auto& T = t.value(table);
  Mat<S> out(static_cast<Eigen::Index>(rows.size()), T.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= T.rows()) throw Error("unknown_token", "row index out of range in gather");
    out.row(static_cast<Eigen::Index>(i)) = T.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {table}, [table, idx = std::move(idx)](Tape<S>& tp, const Mat<S>& g) {
    const auto& T = tp.value(table);
    Mat<S> scratch;
    if (auto* d = grad_target(tp, table, T.rows(), T.cols(), scratch)) {
      for (size_t i = 0; i < idx.size(); ++i) d->row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      tp.accumulate(table, *d);
    }
  });
}

template <class S>
Var layer_norm(Tape<S>& t, Var x, Var gain, Var bias, S eps) {
  const auto& X = t.value(x);
  const auto& G = t.value(gain);
  const auto& B = t.value(bias);
  const Eigen::Index n = X.rows(), d = X.cols();
  if (G.cols() != d || B.cols() != d) throw Error("shape_mismatch", "layer_norm parameter width");
  auto xhat = std::make_shared<Mat<S>>(n, d);
  auto rstd = std::make_shared<std::vector<S>>(static_cast<size_t>(n));
  Mat<S> out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mean = X.row(i).mean();
    const S var = (X.row(i).array() - mean).square().mean();
    const S r = S(1) / std::sqrt(var + eps);
    (*rstd)[static_cast<size_t>(i)] = r;
    xhat->row(i) = (X.row(i).array() - mean) * r;
    out.row(i) = xhat->row(i).cwiseProduct(G.row(0)) + B.row(0);
  }
  return t.record(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, rstd](Tape<S>& tp, const Mat<S>& g) {
    const auto& G = tp.value(gain);
    const Eigen::Index n = g.rows(), d = g.cols();
    if (tp.needs_grad(gain)) tp.accumulate(gain, Mat<S>(g.cwiseProduct(*xhat).colwise().sum()));
    if (tp.needs_grad(bias)) tp.accumulate(bias, Mat<S>(g.colwise().sum()));
    if (tp.needs_grad(x)) {
      Mat<S> dx(n, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const RowVec<S> dxhat = g.row(i).cwiseProduct(G.row(0));
        const S m1 = dxhat.mean();
        const S m2 = dxhat.cwiseProduct(xhat->row(i)).mean();
        dx.row(i) = (dxhat.array() - m1 - xhat->row(i).array() * m2) * (*rstd)[static_cast<size_t>(i)];
      }
      tp.accumulate(x, dx);
    }
  });
}

template <class S>
Var gelu(Tape<S>& t, Var x) {
  const S c = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
  const S a = S(0.044715);
  const auto& X = t.value(x);
  Mat<S> th = (c * (X.array() + a * X.array().cube())).tanh().matrix();
  Mat<S> out = (S(0.5) * X.array() * (S(1) + th.array())).matrix();
  auto saved = std::make_shared<Mat<S>>(std::move(th));
  return t.record(std::move(out), {x}, [x, saved, c, a](Tape<S>& tp, const Mat<S>& g) {
    const auto& X = tp.value(x);
    const auto& th = saved->array();
    auto dydx = S(0.5) * (S(1) + th) +
                S(0.5) * X.array() * (S(1) - th.square()) * c * (S(1) + S(3) * a * X.array().square());
    tp.accumulate(x, (g.array() * dydx).matrix().eval());
  });
}

template <class S>
Var causal_attention(Tape<S>& t, Var q, Var k, Var v, int n_heads) {
  const auto& Q = t.value(q);
  const auto& K = t.value(k);
  const auto& V = t.value(v);
  const Eigen::Index T = Q.rows(), d = Q.cols();
  if (K.rows() != T || V.rows() != T || K.cols() != d || V.cols() != d || d % n_heads != 0)
    throw Error("shape_mismatch", "attention inputs disagree");
  const Eigen::Index dh = d / n_heads;
  const S scl = S(1) / std::sqrt(static_cast<S>(dh));
  auto probs = std::make_shared<std::vector<Mat<S>>>(static_cast<size_t>(n_heads));
  Mat<S> out(T, d);
  for (int h = 0; h < n_heads; ++h) {
    Mat<S>& P = (*probs)[static_cast<size_t>(h)];
    P.noalias() = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose();
    for (Eigen::Index i = 0; i < T; ++i) {
      auto row = P.row(i).head(i + 1);
      row *= scl;
      const S mx = row.maxCoeff();
      row = (row.array() - mx).exp().matrix();
      row /= row.sum();
      P.row(i).tail(T - i - 1).setZero();
    }
    out.middleCols(h * dh, dh).noalias() = P * V.middleCols(h * dh, dh);
  }
  return t.record(std::move(out), {q, k, v}, [q, k, v, probs, n_heads, dh, scl](Tape<S>& tp, const Mat<S>& g) {
    const auto& Q = tp.value(q);
    const auto& K = tp.value(k);
    const auto& V = tp.value(v);
    const Eigen::Index T = Q.rows(), d = Q.cols();
    Mat<S> dQ = Mat<S>::Zero(T, d), dK = Mat<S>::Zero(T, d), dV = Mat<S>::Zero(T, d);
    for (int h = 0; h < n_heads; ++h) {
      const Mat<S>& P = (*probs)[static_cast<size_t>(h)];
      const auto gh = g.middleCols(h * dh, dh);
      dV.middleCols(h * dh, dh).noalias() = P.transpose() * gh;
      Mat<S> dP;
      dP.noalias() = gh * V.middleCols(h * dh, dh).transpose();
      // dS = P * (dP - rowsum(dP * P)); masked entries have P = 0.
      const auto rs = (dP.cwiseProduct(P)).rowwise().sum();
      Mat<S> dS = P.cwiseProduct((dP.colwise() - rs)) * scl;
      dQ.middleCols(h * dh, dh).noalias() = dS * K.middleCols(h * dh, dh);
      dK.middleCols(h * dh, dh).noalias() = dS.transpose() * Q.middleCols(h * dh, dh);
    }
    tp.accumulate(q, dQ);
    tp.accumulate(k, dK);
    tp.accumulate(v, dV);
  });
}

template <class S>
Var dropout(Tape<S>& t, Var x, double p, Rng& rng) {
  if (p <= 0) return x;
  if (p >= 1) throw Error("invalid_argument", "dropout probability must be < 1");
  const auto& X = t.value(x);
  auto mask = std::make_shared<Mat<S>>(X.rows(), X.cols());
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask->size(); ++i) mask->data()[i] = rng.uniform() < p ? S(0) : keep;
  return t.record(X.cwiseProduct(*mask), {x},
                  [x, mask](Tape<S>& tp, const Mat<S>& g) { tp.accumulate(x, g.cwiseProduct(*mask)); });
}

template <class S>
Var select_row(Tape<S>& t, Var x, int row) {
  const auto& X = t.value(x);
  if (row < 0 || row >= X.rows()) throw Error("invalid_argument", "select_row index out of range");
  return t.record(Mat<S>(X.row(row)), {x}, [x, row](Tape<S>& tp, const Mat<S>& g) {
    const auto& X = tp.value(x);
    Mat<S> scratch;
    if (auto* d = grad_target(tp, x, X.rows(), X.cols(), scratch)) {
      d->row(row) = g.row(0);
      tp.accumulate(x, *d);
    }
  });
}

template <class S>
Var concat_rows(Tape<S>& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error("invalid_argument", "concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.value(parts[0]).cols();
  for (const Var& p : parts) {
    if (t.value(p).cols() != cols) throw Error("shape_mismatch", "concat_rows column mismatch");
    rows += t.value(p).rows();
  }
  Mat<S> out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(out), ins, [ins](Tape<S>& tp, const Mat<S>& g) {
    Eigen::Index r = 0;
    for (const Var& p : ins) {
      const Eigen::Index n = tp.value(p).rows();
      if (tp.needs_grad(p)) tp.accumulate(p, Mat<S>(g.middleRows(r, n)));
      r += n;
    }
  });
}

template <class S>
Var l2_normalize_rows(Tape<S>& t, Var x, S eps) {
  const auto& X = t.value(x);
  auto norms = std::make_shared<std::vector<S>>(static_cast<size_t>(X.rows()));
  Mat<S> out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const S n = std::max(X.row(i).norm(), eps);
    (*norms)[static_cast<size_t>(i)] = n;
    out.row(i) = X.row(i) / n;
  }
  auto y = std::make_shared<Mat<S>>(out);
  return t.record(std::move(out), {x}, [x, y, norms](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const S proj = y->row(i).dot(g.row(i));
      dx.row(i) = (g.row(i) - proj * y->row(i)) / (*norms)[static_cast<size_t>(i)];
    }
    tp.accumulate(x, dx);
  });
}

template <class S>
Var sum(Tape<S>& t, Var x) {
  const auto& X = t.value(x);
  Mat<S> out(1, 1);
  out(0, 0) = X.sum();
  const Eigen::Index r = X.rows(), c = X.cols();
  return t.record(std::move(out), {x},
                  [x, r, c](Tape<S>& tp, const Mat<S>& g) { tp.accumulate(x, Mat<S>::Constant(r, c, g(0, 0))); });
}

template <class S>
Var softmax_cross_entropy(Tape<S>& t, Var logits, std::span<const int> targets, const Mat<S>* excluded) {
  const auto& L = t.value(logits);
  const Eigen::Index n = L.rows(), V = L.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n) throw Error("shape_mismatch", "one target per logits row");
  if (excluded && (excluded->rows() != n || excluded->cols() != V))
    throw Error("shape_mismatch", "exclusion mask shape differs from logits");
  auto probs = std::make_shared<Mat<S>>(Mat<S>::Zero(n, V));
  std::vector<int> tg(targets.begin(), targets.end());
  double total = 0;
  int count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = tg[static_cast<size_t>(i)];
    if (y < 0) continue;
    if (y >= V) throw Error("unknown_token", "target id out of range");
    if (excluded && (*excluded)(i, y) != S(0)) throw Error("invalid_argument", "target logit is excluded");
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < V; ++j)
      if (!excluded || (*excluded)(i, j) == S(0)) mx = std::max(mx, L(i, j));
    S z = 0;
    for (Eigen::Index j = 0; j < V; ++j) {
      if (excluded && (*excluded)(i, j) != S(0)) continue;
      const S e = std::exp(L(i, j) - mx);
      (*probs)(i, j) = e;
      z += e;
    }
    probs->row(i) /= z;
    total += static_cast<double>(-(L(i, y) - mx - std::log(z)));
    ++count;
  }
  if (count == 0) throw Error("empty_mask", "cross-entropy over an empty selection");
  Mat<S> out(1, 1);
  out(0, 0) = static_cast<S>(total / count);
  return t.record(std::move(out), {logits}, [logits, probs, tg, count](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> d = Mat<S>::Zero(probs->rows(), probs->cols());
    const S w = g(0, 0) / static_cast<S>(count);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const int y = tg[static_cast<size_t>(i)];
      if (y < 0) continue;
      d.row(i) = probs->row(i) * w;
      d(i, y) -= w;
    }
    tp.accumulate(logits, d);
  });
}

template <class S>
Var linear_combination(Tape<S>& t, std::span<const Var> parts, std::span<const S> coeffs) {
  if (parts.size() != coeffs.size()) throw Error("shape_mismatch", "one coefficient per part");
  Mat<S> out = Mat<S>::Zero(1, 1);
  for (size_t i = 0; i < parts.size(); ++i) {
    const auto& p = t.value(parts[i]);
    if (p.rows() != 1 || p.cols() != 1) throw Error("shape_mismatch", "linear_combination takes scalars");
    out(0, 0) += coeffs[i] * p(0, 0);
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  std::vector<S> cs(coeffs.begin(), coeffs.end());
  return t.record(std::move(out), ins, [ins, cs](Tape<S>& tp, const Mat<S>& g) {
    for (size_t i = 0; i < ins.size(); ++i)
      if (tp.needs_grad(ins[i])) tp.accumulate(ins[i], Mat<S>::Constant(1, 1, cs[i] * g(0, 0)));
  });
}

#define GENREC_INSTANTIATE(S)                                                                     \
  template class Tape<S>;                                                                         \
  template Var matmul<S>(Tape<S>&, Var, Var);                                                     \
  template Var matmul_nt<S>(Tape<S>&, Var, Var);                                                  \
  template Var add<S>(Tape<S>&, Var, Var);                                                        \
  template Var add_bias<S>(Tape<S>&, Var, Var);                                                   \
  template Var scale<S>(Tape<S>&, Var, S);                                                        \
  template Var gather_rows<S>(Tape<S>&, Var, std::span<const int>);                               \
  template Var layer_norm<S>(Tape<S>&, Var, Var, Var, S);                                         \
  template Var gelu<S>(Tape<S>&, Var);                                                            \
  template Var causal_attention<S>(Tape<S>&, Var, Var, Var, int);                                 \
  template Var dropout<S>(Tape<S>&, Var, double, Rng&);                                           \
  template Var select_row<S>(Tape<S>&, Var, int);                                                 \
  template Var concat_rows<S>(Tape<S>&, std::span<const Var>);                                    \
  template Var l2_normalize_rows<S>(Tape<S>&, Var, S);                                            \
  template Var sum<S>(Tape<S>&, Var);                                                             \
  template Var softmax_cross_entropy<S>(Tape<S>&, Var, std::span<const int>, const Mat<S>*);      \
  template Var linear_combination<S>(Tape<S>&, std::span<const Var>, std::span<const S>);

GENREC_INSTANTIATE(float)
GENREC_INSTANTIATE(double)

#undef GENREC_INSTANTIATE

}  // namespace genrec::ag
