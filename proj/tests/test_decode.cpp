#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "genrec/decode.hpp"
#include "decode_oracle.hpp"
#include "test_util.hpp"

using namespace genrec;
using namespace decode_oracle;

namespace {

void expect_same_ranking(const std::vector<Ranked>& a, const std::vector<Ranked>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].item, b[i].item) << "position " << i;
    EXPECT_NEAR(a[i].log_prob, b[i].log_prob, 1e-9);
    EXPECT_EQ(a[i].tokens, b[i].tokens);
  }
}

}  // namespace

TEST(BeamSearch, SingleItemCatalog) {
  const auto trie = IndexTrie::build({{3, 1, 4}});
  HashedLogits m(8, 1);
  const std::vector<int> prompt = {0};
  const auto r = constrained_beam_search(m, prompt, trie, 5);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].tokens, (std::vector<int>{3, 1, 4}));
  EXPECT_DOUBLE_EQ(r[0].log_prob, 0.0);
}

TEST(BeamSearch, MatchesBruteForceWhenBeamCoversCatalog) {
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 8 + trial % 25;  // 8..32 items
    const bool ragged = trial % 2 == 1;
    const auto seqs = random_catalog(n, 3, 4, 1000 + static_cast<uint64_t>(trial), ragged);
    const auto trie = IndexTrie::build(seqs);
    HashedLogits m(20, static_cast<uint64_t>(trial));
    const std::vector<int> prompt = {19, 18};
    const auto beam = constrained_beam_search(m, prompt, trie, n + trial % 3);
    const auto oracle =
        brute_force(seqs, prompt, [&](const std::vector<int>& s) { return m.logits_for(s); });
    expect_same_ranking(beam, oracle);
  }
}

TEST(BeamSearch, RandomLogitDecodingNeverLeavesTheTrie) {
  int64_t steps = 0;
  for (uint64_t trial = 0; steps < 10000; ++trial) {
    const auto seqs = random_catalog(10 + static_cast<int>(trial % 40), 4, 3, 77 + trial, trial % 3 == 0);
    const auto trie = IndexTrie::build(seqs);
    std::set<std::vector<int>> prefixes;
    for (const auto& s : seqs)
      for (size_t l = 1; l <= s.size(); ++l) prefixes.insert(std::vector<int>(s.begin(), s.begin() + static_cast<long>(l)));
    HashedLogits m(16, trial, 10.0);
    const std::vector<int> prompt = {15};
    const int beam = 1 + static_cast<int>(trial % 20);
    const auto r = constrained_beam_search(m, prompt, trie, beam);
    for (const auto& ext : m.extended) EXPECT_TRUE(prefixes.count(ext)) << "invalid decode step";
    steps += static_cast<int64_t>(m.extended.size());
    ASSERT_FALSE(r.empty());
    EXPECT_LE(r.size(), static_cast<size_t>(beam));
    std::set<int> items;
    for (size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(trie.lookup(r[i].tokens), r[i].item);
      EXPECT_TRUE(items.insert(r[i].item).second);
      if (i > 0) EXPECT_GE(r[i - 1].log_prob, r[i].log_prob);
      EXPECT_LE(r[i].log_prob, 0.0);
    }
  }
  EXPECT_GE(steps, 10000);
}

TEST(BeamSearch, ScoresAgreeWithBruteForceForNarrowBeams) {
  for (uint64_t trial = 0; trial < 20; ++trial) {
    const auto seqs = random_catalog(30, 4, 3, 300 + trial, false);
    const auto trie = IndexTrie::build(seqs);
    HashedLogits m(16, trial);
    const std::vector<int> prompt = {15};
    const auto oracle = brute_force(seqs, prompt, [&](const std::vector<int>& s) { return m.logits_for(s); });
    std::map<int, double> exact;
    for (const auto& o : oracle) exact[o.item] = o.log_prob;
    for (const auto& r : constrained_beam_search(m, prompt, trie, 5)) EXPECT_NEAR(r.log_prob, exact[r.item], 1e-9);
  }
}

// On two-level tries every narrow beam's survivors are a subset of a wider
// beam's candidates, so position-wise scores can only improve with width.
TEST(BeamSearch, WiderBeamsDominatePositionwiseOnTwoLevelTries) {
  for (uint64_t trial = 0; trial < 50; ++trial) {
    const auto seqs = random_catalog(25, 6, 2, 900 + trial, false);
    const auto trie = IndexTrie::build(seqs);
    HashedLogits m(16, trial);
    const std::vector<int> prompt = {15};
    std::vector<Ranked> prev;
    for (int beam = 1; beam <= 25; ++beam) {
      const auto cur = constrained_beam_search(m, prompt, trie, beam);
      for (size_t i = 0; i < prev.size() && i < cur.size(); ++i) EXPECT_GE(cur[i].log_prob, prev[i].log_prob - 1e-12);
      prev = cur;
    }
  }
}

namespace {

// Uniform logits everywhere: scores depend only on trie branching.
class Flat final : public StepModel {
 public:
  int begin(std::span<const int>) override { return 0; }
  std::vector<int> extend(std::span<const std::pair<int, int>> st) override { return std::vector<int>(st.size(), 0); }
  RowVec<double> logits(int) const override { return RowVec<double>::Zero(10); }
};

}  // namespace

// Deeper tries admit the classic beam-search anomaly: a wider beam keeps
// prefixes whose continuations branch more and loses a narrower beam's item.
TEST(BeamSearch, WiderBeamCanLoseOnDeepTries) {
  // x = 0 has three children with one leaf each; y = 1 has two children
  // with four leaves each.
  std::vector<std::vector<int>> seqs = {{0, 2, 5}, {0, 3, 5}, {0, 4, 5}};
  for (int c : {2, 3})
    for (int l : {5, 6, 7, 8}) seqs.push_back({1, c, l});
  const auto trie = IndexTrie::build(seqs);
  Flat m;
  const std::vector<int> prompt = {0};
  const auto narrow = constrained_beam_search(m, prompt, trie, 1);
  const auto wide = constrained_beam_search(m, prompt, trie, 2);
  ASSERT_EQ(narrow.size(), 1u);
  EXPECT_EQ(narrow[0].tokens, (std::vector<int>{0, 2, 5}));
  EXPECT_NEAR(narrow[0].log_prob, -std::log(6.0), 1e-12);
  // y's children (-log 4) outrank x's (-log 6) at depth two, then split
  // four ways.
  EXPECT_EQ(wide[0].tokens, (std::vector<int>{1, 2, 5}));
  EXPECT_NEAR(wide[0].log_prob, -std::log(16.0), 1e-12);
}

TEST(BeamSearch, TiesBreakByTokenSequence) {
  const auto trie = IndexTrie::build({{2, 5}, {1, 6}, {2, 4}, {1, 5}});
  Flat m;
  const std::vector<int> prompt = {0};
  const auto r = constrained_beam_search(m, prompt, trie, 4);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].tokens, (std::vector<int>{1, 5}));
  EXPECT_EQ(r[1].tokens, (std::vector<int>{1, 6}));
  EXPECT_EQ(r[2].tokens, (std::vector<int>{2, 4}));
  EXPECT_EQ(r[3].tokens, (std::vector<int>{2, 5}));
  for (const auto& x : r) EXPECT_NEAR(x.log_prob, 2 * std::log(0.5), 1e-12);
}

TEST(BeamSearch, Errors) {
  HashedLogits m(4, 1);
  const std::vector<int> prompt = {0};
  EXPECT_GENREC_ERROR(constrained_beam_search(m, prompt, IndexTrie::build({{1}}), 0), "invalid_argument");
}

TEST(Recommend, ExcludesAndTruncates) {
  const std::vector<std::vector<int>> seqs = {{1, 4}, {1, 5}, {2, 4}, {2, 5}, {3, 4}};
  const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  const auto trie = IndexTrie::build(seqs);
  HashedLogits m(8, 3);
  const std::vector<int> prompt = {7};
  const auto all = recommend(m, prompt, trie, ids, 5, 5);
  ASSERT_EQ(all.size(), 5u);
  const auto top2 = recommend(m, prompt, trie, ids, 2, 5);
  ASSERT_EQ(top2.size(), 2u);
  EXPECT_EQ(top2[0].item_id, all[0].item_id);
  const auto skip = recommend(m, prompt, trie, ids, 3, 5, {all[0].item_id, all[2].item_id});
  ASSERT_EQ(skip.size(), 3u);
  EXPECT_EQ(skip[0].item_id, all[1].item_id);
  EXPECT_EQ(skip[1].item_id, all[3].item_id);
  EXPECT_EQ(skip[2].item_id, all[4].item_id);
  EXPECT_GENREC_ERROR(recommend(m, prompt, trie, ids, 6, 5), "invalid_argument");
  EXPECT_GENREC_ERROR(recommend(m, std::vector<int>{}, trie, ids, 2, 5), "empty_history");
}

TEST(Recommend, TransformerMatchesFullRecomputation) {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context_len = 32;
  c.seed = 5;
  auto v = Vocab::byte_level();
  std::vector<std::string> extra;
  for (int i = 0; i < 8; ++i) extra.push_back("<t" + std::to_string(i) + ">");
  v.extend(extra);
  Model<float> model(c, v);
  // Large random weights so the ranking is far from uniform.
  Rng rng(2);
  for (auto& t : model.base.tensors)
    if (t.value.rows() > 1)
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = static_cast<float>(0.3 * rng.normal());
  const auto seqs = random_catalog(12, 3, 2, 11, true);
  std::vector<std::vector<int>> token_seqs;
  for (const auto& s : seqs) {
    std::vector<int> t;
    for (int x : s) t.push_back(259 + x % 8);
    token_seqs.push_back(t);
  }
  // Map back to a prefix-free set in the model's vocabulary.
  std::set<std::vector<int>> uniq(token_seqs.begin(), token_seqs.end());
  std::vector<std::vector<int>> cat;
  for (const auto& s : uniq) {
    bool prefix = false;
    for (const auto& o : uniq)
      if (o != s && o.size() > s.size() && std::equal(s.begin(), s.end(), o.begin())) prefix = true;
    if (!prefix) cat.push_back(s);
  }
  ASSERT_GE(cat.size(), 8u);
  const auto trie = IndexTrie::build(cat);
  TransformerStepModel step(model, false);
  const std::vector<int> prompt = {257, 72, 105};
  const auto beam = constrained_beam_search(step, prompt, trie, static_cast<int>(cat.size()));
  const auto oracle = brute_force(cat, prompt, [&](const std::vector<int>& s) {
    MatF logits;
    model.infer(s, false, &logits);
    return RowVec<double>(logits.bottomRows(1).cast<double>());
  });
  ASSERT_EQ(beam.size(), oracle.size());
  for (size_t i = 0; i < beam.size(); ++i) {
    EXPECT_EQ(beam[i].tokens, oracle[i].tokens);
    EXPECT_NEAR(beam[i].log_prob, oracle[i].log_prob, 1e-4);
  }
}
