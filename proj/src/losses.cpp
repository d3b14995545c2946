#include "genrec/losses.hpp"

namespace genrec {

template <class S>
ag::Var generation_loss(ag::Tape<S>& t, ag::Var logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != t.value(logits).rows())
    throw Error("shape_mismatch", "one target per logits row is required");
  return ag::softmax_cross_entropy(t, logits, targets);
}

template <class S>
ag::Var contrastive_loss(ag::Tape<S>& t, ag::Var projected, const Mat<S>& positives, const Mat<S>& excluded,
                         S tau) {
  // Shape only: later nodes may reallocate the tape's storage.
  const Eigen::Index rows = t.value(projected).rows(), cols = t.value(projected).cols();
  if (cols != positives.cols())
    throw Error("shape_mismatch", "projected width " + std::to_string(cols) + " differs from embedding width " +
                                      std::to_string(positives.cols()));
  if (rows != positives.rows() || rows < 1)
    throw Error("shape_mismatch", "contrastive batch needs one positive per row");
  if (excluded.size() && (excluded.rows() != rows || excluded.cols() != rows))
    throw Error("shape_mismatch", "exclusion mask must be N x N");
  if (!(tau > 0)) throw Error("invalid_argument", "temperature must be positive");
  Mat<S> z = positives;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const S n = z.row(i).norm();
    if (n > 0) z.row(i) /= n;
  }
  ag::Var a = ag::l2_normalize_rows(t, projected);
  ag::Var sims = ag::matmul_nt(t, a, t.constant(std::move(z)));
  ag::Var logits = ag::scale(t, sims, S(1) / tau);
  std::vector<int> targets(static_cast<size_t>(rows));
  for (size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(i);
  return ag::softmax_cross_entropy(t, logits, targets, excluded.size() ? &excluded : nullptr);
}

LossBreakdown total_loss(double gen, double con_s, double con_b, double lambda1, double lambda2, int i_srt) {
  LossBreakdown b{gen, con_s, con_b, lambda1, lambda2, i_srt, gen};
  if (i_srt) b.total = gen + (lambda1 * con_s + lambda2 * con_b);
  return b;
}

template ag::Var generation_loss(ag::Tape<float>&, ag::Var, std::span<const int>);
template ag::Var generation_loss(ag::Tape<double>&, ag::Var, std::span<const int>);
template ag::Var contrastive_loss(ag::Tape<float>&, ag::Var, const Mat<float>&, const Mat<float>&, float);
template ag::Var contrastive_loss(ag::Tape<double>&, ag::Var, const Mat<double>&, const Mat<double>&, double);

}  // namespace genrec
