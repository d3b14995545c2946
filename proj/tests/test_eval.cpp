#include <cmath>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "genrec/eval.hpp"
#include "test_util.hpp"

using namespace genrec;

TEST(Metrics, HandFixtures) {
  const std::vector<std::string> ranked = {"a", "b", "c", "d", "e", "f"};
  EXPECT_EQ(recall_at_k(ranked, "a", 1), 1);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, "a", 5), 1.0);
  EXPECT_EQ(recall_at_k(ranked, "c", 5), 1);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, "c", 5), 0.5);
  EXPECT_EQ(recall_at_k(ranked, "c", 2), 0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, "c", 2), 0.0);
  EXPECT_EQ(recall_at_k(ranked, "zz", 10), 0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, "zz", 10), 0.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, "b", 5), 1.0 / std::log2(3.0));
  EXPECT_GENREC_ERROR(recall_at_k(ranked, "a", 0), "invalid_argument");
}

TEST(Metrics, MonotoneInK) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> ranked;
    for (int i = 0; i < 20; ++i) ranked.push_back("i" + std::to_string(i));
    rng.shuffle(ranked);
    const std::string target = "i" + std::to_string(rng.below(25));
    for (int k = 1; k < 25; ++k) {
      EXPECT_LE(recall_at_k(ranked, target, k), recall_at_k(ranked, target, k + 1));
      EXPECT_LE(ndcg_at_k(ranked, target, k), ndcg_at_k(ranked, target, k + 1));
      EXPECT_LE(ndcg_at_k(ranked, target, k), recall_at_k(ranked, target, k));
    }
  }
}

TEST(Metrics, AggregateAveragesUsers) {
  std::vector<UserResult> users(3);
  users[0].target = "x";
  users[0].ranked = {"x", "y"};
  users[1].target = "x";
  users[1].ranked = {"a", "b", "c", "x"};
  users[2].target = "q";
  users[2].ranked = {"a"};
  const auto rep = aggregate(users, {1, 5});
  EXPECT_EQ(rep.users, 3);
  EXPECT_DOUBLE_EQ(rep.recall_at(1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(rep.recall_at(5), 2.0 / 3);
  EXPECT_DOUBLE_EQ(rep.ndcg_at(5), (1.0 + 1.0 / std::log2(5.0)) / 3);
  EXPECT_GENREC_ERROR(rep.recall_at(10), "invalid_argument");
  std::vector<std::string> lines;
  for (const auto& l : split(rep.to_jsonl(), '\n'))
    if (!l.empty()) lines.push_back(l);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(nlohmann::json::parse(lines[2])["metric"], "recall@5");
  EXPECT_EQ(aggregate({}, {5}).recall_at(5), 0.0);
}

namespace {

struct NullWorld {
  std::vector<ItemIndex> indices;
  std::vector<std::string> ids;
  Vocab vocab = Vocab::byte_level();
  Splits splits;
};

NullWorld null_world(int n_items, int n_users, uint64_t seed) {
  NullWorld w;
  for (int i = 0; i < n_items; ++i) w.ids.push_back("i" + std::to_string(10000 + i));
  IndexConfig ic;
  ic.k = 8;
  ic.depth_s = 2;
  ic.depth_b = 2;
  w.indices = assemble_unified_index(random_codes(w.ids.size(), 8, 2, seed), random_codes(w.ids.size(), 8, 2, seed + 1),
                                     w.ids);
  w.vocab.extend(vocab_tokens(ic, disambig_count(w.indices)));
  Rng rng(seed);
  for (int u = 0; u < n_users; ++u) {
    UserSplit s;
    s.user_id = "u" + std::to_string(10000 + u);
    std::set<std::string> used;
    const int len = 3 + static_cast<int>(rng.below(6));
    while (static_cast<int>(s.train.size()) < len + 1) {
      const auto& id = w.ids[rng.below(w.ids.size())];
      if (used.insert(id).second) s.train.push_back(id);
    }
    s.valid = s.train.back();
    s.train.pop_back();
    do s.test = w.ids[rng.below(w.ids.size())];
    while (used.count(s.test));
    w.splits.users.push_back(s);
  }
  return w;
}

}  // namespace

// A random-weight model carries no information about uniformly drawn
// targets, so Recall@10 must sit near the coverage-weighted chance rate.
TEST(Evaluate, UntrainedModelScoresAtChance) {
  const auto w = null_world(1000, 800, 3);
  ModelConfig mc;
  mc.d_model = 16;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.context_len = 128;
  mc.seed = 9;
  Model<float> model(mc, w.vocab);
  TaskRenderer renderer(model.vocab(), w.indices, nullptr, mc.context_len);
  const auto trie = IndexTrie::build(w.indices, model.vocab());
  EvalConfig ec;
  ec.use_adapter = false;
  const auto rep = evaluate(model, w.splits, renderer, trie, w.ids, ec);
  ASSERT_EQ(rep.users, 800);
  double expect = 0;
  for (size_t u = 0; u < rep.per_user.size(); ++u) {
    const auto hist = eval_history(w.splits.users[u], true);
    const double coverage = std::min<double>(10, static_cast<double>(rep.per_user[u].ranked.size()));
    expect += coverage / static_cast<double>(1000 - hist.size());
  }
  expect /= rep.users;
  const double sigma = std::sqrt(expect * (1 - expect) / rep.users);
  EXPECT_NEAR(rep.recall_at(10), expect, 3 * sigma);
  // History items never appear in the ranked lists.
  for (size_t u = 0; u < rep.per_user.size(); ++u) {
    const auto hist = eval_history(w.splits.users[u], true);
    for (const auto& id : rep.per_user[u].ranked)
      EXPECT_EQ(std::count(hist.begin(), hist.end(), id), 0);
  }
}

TEST(Evaluate, ValidationModeAndUserCap) {
  const auto w = null_world(50, 10, 4);
  ModelConfig mc;
  mc.d_model = 8;
  mc.n_layers = 1;
  mc.n_heads = 1;
  mc.context_len = 96;
  Model<float> model(mc, w.vocab);
  TaskRenderer renderer(model.vocab(), w.indices, nullptr, mc.context_len);
  const auto trie = IndexTrie::build(w.indices, model.vocab());
  EvalConfig ec;
  ec.test_mode = false;
  ec.max_users = 4;
  ec.exclude_history = false;
  ec.beam = 50;
  const auto rep = evaluate(model, w.splits, renderer, trie, w.ids, ec);
  EXPECT_EQ(rep.users, 4);
  for (int u = 0; u < 4; ++u) {
    EXPECT_EQ(rep.per_user[static_cast<size_t>(u)].target, w.splits.users[static_cast<size_t>(u)].valid);
    // Full beam over the whole catalog: every item is listed, so the
    // target always has a rank.
    EXPECT_EQ(rep.per_user[static_cast<size_t>(u)].ranked.size(), 50u);
    EXPECT_GT(rep.per_user[static_cast<size_t>(u)].rank, 0);
  }
  ec.ks = {60};
  EXPECT_GENREC_ERROR(evaluate(model, w.splits, renderer, trie, w.ids, ec), "invalid_argument");
}
