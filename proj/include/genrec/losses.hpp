#pragma once

#include <span>

#include "genrec/autograd.hpp"

namespace genrec {

// Mean negative log-likelihood of next-token targets (-1 entries skipped).
template <class S>
ag::Var generation_loss(ag::Tape<S>& t, ag::Var logits, std::span<const int> targets);

// One-directional InfoNCE. Row i of `projected` is scored by cosine
// similarity / tau against every row of `positives`; its own row is the
// positive, rows flagged in `excluded` are dropped from the candidates.
template <class S>
ag::Var contrastive_loss(ag::Tape<S>& t, ag::Var projected, const Mat<S>& positives, const Mat<S>& excluded,
                         S tau);

struct LossBreakdown {
  double gen = 0, con_s = 0, con_b = 0;
  double lambda1 = 0, lambda2 = 0;
  int i_srt = 0;
  double total = 0;
};

// total = gen + i_srt * (lambda1 * con_s + lambda2 * con_b); with i_srt = 0
// the contrastive terms are not evaluated at all.
LossBreakdown total_loss(double gen, double con_s, double con_b, double lambda1, double lambda2, int i_srt);

}  // namespace genrec
