#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "genrec/common.hpp"
#include "genrec/decode.hpp"

// Reference scoring models and an exhaustive ranking oracle for beam search.
namespace decode_oracle {

using namespace genrec;

// Logits are a pure function of the full token sequence, so any prefix can
// be rescored independently of the search.
class HashedLogits final : public StepModel {
 public:
  HashedLogits(int vocab, uint64_t seed, double spread = 3.0) : vocab_(vocab), seed_(seed), spread_(spread) {}

  int begin(std::span<const int> prompt) override {
    seqs_.assign(1, std::vector<int>(prompt.begin(), prompt.end()));
    prompt_len_ = prompt.size();
    return 0;
  }
  std::vector<int> extend(std::span<const std::pair<int, int>> st) override {
    std::vector<int> out;
    for (const auto& [s, tok] : st) {
      auto seq = seqs_.at(static_cast<size_t>(s));
      seq.push_back(tok);
      extended.push_back(std::vector<int>(seq.begin() + static_cast<long>(prompt_len_), seq.end()));
      seqs_.push_back(std::move(seq));
      out.push_back(static_cast<int>(seqs_.size()) - 1);
    }
    return out;
  }
  RowVec<double> logits(int state) const override { return logits_for(seqs_.at(static_cast<size_t>(state))); }

  RowVec<double> logits_for(const std::vector<int>& seq) const {
    uint64_t h = seed_;
    for (int t : seq) h = hash_combine(h, static_cast<uint64_t>(t));
    Rng rng(h);
    RowVec<double> r(vocab_);
    for (int i = 0; i < vocab_; ++i) r(i) = spread_ * rng.normal();
    return r;
  }

  std::vector<std::vector<int>> extended;  // generated suffixes, for validity checks

 private:
  int vocab_;
  uint64_t seed_;
  double spread_;
  size_t prompt_len_ = 0;
  std::vector<std::vector<int>> seqs_;
};

inline double log_softmax_over(const RowVec<double>& logits, const std::vector<int>& allowed, int pick) {
  double mx = -1e300;
  for (int a : allowed) mx = std::max(mx, logits(a));
  double z = 0;
  for (int a : allowed) z += std::exp(logits(a) - mx);
  return logits(pick) - mx - std::log(z);
}

// Scores every item path independently: the sum over steps of the token's
// log-probability renormalised over the children admissible at that step.
inline std::vector<Ranked> brute_force(const std::vector<std::vector<int>>& seqs, const std::vector<int>& prompt,
                                const std::function<RowVec<double>(const std::vector<int>&)>& logits_for) {
  std::vector<Ranked> out;
  for (size_t item = 0; item < seqs.size(); ++item) {
    const auto& path = seqs[item];
    double score = 0;
    std::vector<int> ctx = prompt;
    for (size_t s = 0; s < path.size(); ++s) {
      std::set<int> allowed;
      for (const auto& other : seqs)
        if (other.size() > s && std::equal(path.begin(), path.begin() + static_cast<long>(s), other.begin()))
          allowed.insert(other[s]);
      score += log_softmax_over(logits_for(ctx), std::vector<int>(allowed.begin(), allowed.end()), path[s]);
      ctx.push_back(path[s]);
    }
    out.push_back({static_cast<int>(item), score, path});
  }
  std::sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  });
  return out;
}

// Random prefix-free catalog with optional ragged lengths.
inline std::vector<std::vector<int>> random_catalog(int n, int k, int depth, uint64_t seed, bool ragged) {
  if (n > std::pow(k, depth) * (ragged ? 2 : 1)) throw std::invalid_argument("catalog larger than its code space");
  Rng rng(seed);
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> out;
  while (static_cast<int>(out.size()) < n) {
    std::vector<int> s;
    for (int l = 0; l < depth; ++l) s.push_back(l * k + static_cast<int>(rng.below(static_cast<uint64_t>(k))));
    if (ragged) s.push_back(depth * k + static_cast<int>(rng.below(2)));
    if (seen.insert(s).second) out.push_back(s);
  }
  if (ragged) {
    // Items whose code is unique drop the suffix, giving mixed lengths.
    std::map<std::vector<int>, int> stem;
    for (const auto& s : out) ++stem[std::vector<int>(s.begin(), s.end() - 1)];
    for (auto& s : out)
      if (stem[std::vector<int>(s.begin(), s.end() - 1)] == 1) s.pop_back();
  }
  return out;
}

}  // namespace decode_oracle
