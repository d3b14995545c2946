#include <limits>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "genrec/indexer.hpp"
#include "test_util.hpp"

using namespace genrec;

namespace {

MatF random_points(int n, int d, uint64_t seed) {
  Rng rng(seed);
  MatF m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = static_cast<float>(rng.normal());
  return m;
}

// Best 2-partition by exhaustive enumeration; labels normalised so row 0
// has label 0.
std::vector<int> exhaustive_two_means(const MatD& x) {
  const int n = static_cast<int>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (mask & 1u) continue;  // row 0 always in cluster 0
    if (mask == 0) continue;  // both clusters non-empty
    double inertia = 0;
    for (int c = 0; c < 2; ++c) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<uint32_t>(c)) mean += x.row(i), ++cnt;
      mean /= cnt;
      for (int i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<uint32_t>(c)) inertia += (x.row(i) - mean).squaredNorm();
    }
    if (inertia < best - 1e-12) {
      best = inertia;
      best_labels.assign(static_cast<size_t>(n), 0);
      for (int i = 0; i < n; ++i) best_labels[static_cast<size_t>(i)] = (mask >> i) & 1u;
    }
  }
  return best_labels;
}

EmbeddingMatrix as_embeddings(const MatF& v, EmbeddingSource src) {
  EmbeddingMatrix m;
  for (Eigen::Index i = 0; i < v.rows(); ++i) m.item_ids.push_back("item" + std::to_string(1000 + i));
  m.vectors = v;
  m.source = src;
  return m;
}

}  // namespace

TEST(Capacity, ExactPowers) {
  EXPECT_EQ(index_capacity(256, 4), 4294967296ULL);
  EXPECT_EQ(index_capacity(32, 4), 1048576ULL);
  EXPECT_EQ(index_capacity(7, 0), 1ULL);
  EXPECT_GENREC_ERROR(index_capacity(256, 9), "overflow");
}

TEST(KMeans, MatchesExhaustiveTwoMeansOnSmallSets) {
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 7;  // 2..8 points
    const MatD x = random_points(n, 3, 100 + static_cast<uint64_t>(trial)).cast<double>();
    EXPECT_EQ(kmeans(x, 2, 7, 50, 8), exhaustive_two_means(x)) << "trial " << trial;
  }
}

TEST(KMeans, DepthOneHierarchyEqualsFlatOracle) {
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 6;
    const MatF x = random_points(n, 4, 500 + static_cast<uint64_t>(trial));
    const auto codes = hierarchical_kmeans(x, 2, 1, 3, 50);
    const auto oracle = exhaustive_two_means(x.cast<double>());
    for (int i = 0; i < n; ++i) EXPECT_EQ(codes[static_cast<size_t>(i)][0], oracle[static_cast<size_t>(i)]);
  }
}

TEST(KMeans, SeparatedBlobsAreRecovered) {
  MatD x(40, 2);
  Rng rng(1);
  for (int i = 0; i < 40; ++i) {
    const double cx = (i % 4) * 100.0, cy = (i % 4 >= 2) * 100.0;
    x(i, 0) = cx + rng.normal();
    x(i, 1) = cy + rng.normal();
  }
  const auto labels = kmeans(x, 4, 2, 50, 4);
  for (int i = 4; i < 40; ++i) EXPECT_EQ(labels[static_cast<size_t>(i)], labels[static_cast<size_t>(i % 4)]);
  // Relabelled in order of first appearance.
  EXPECT_EQ(labels[0], 0);
  EXPECT_EQ(labels[1], 1);
}

TEST(KMeans, FewerPointsThanClusters) {
  MatD x(3, 2);
  x << 0, 0, 1, 1, 5, 5;
  const auto labels = kmeans(x, 8, 1, 10, 2);
  EXPECT_EQ(std::set<int>(labels.begin(), labels.end()).size(), 3u);
  EXPECT_GENREC_ERROR(kmeans(MatD(0, 2), 2, 1, 10, 1), "empty_input");
}

TEST(HierarchicalKMeans, CodesRespectParentsAndRange) {
  const MatF x = random_points(300, 6, 3);
  const auto codes = hierarchical_kmeans(x, 4, 3, 11, 30, 2);
  ASSERT_EQ(codes.size(), 300u);
  for (const auto& c : codes) {
    ASSERT_EQ(c.size(), 3u);
    for (int v : c) EXPECT_TRUE(v >= 0 && v < 4);
  }
  // Items sharing a level-0 code and a level-1 code came from the same parent.
  std::map<std::vector<int>, int> prefix_sizes;
  for (const auto& c : codes) ++prefix_sizes[{c[0], c[1]}];
  EXPECT_GT(prefix_sizes.size(), 4u);
  EXPECT_EQ(hierarchical_kmeans(x, 4, 3, 11, 30, 2), codes);
  EXPECT_NE(hierarchical_kmeans(x, 4, 3, 12, 30, 2), codes);
  MatF bad = x;
  bad(0, 0) = std::numeric_limits<float>::infinity();
  EXPECT_GENREC_ERROR(hierarchical_kmeans(bad, 4, 3, 1, 10), "invalid_embeddings");
}

TEST(UnifiedIndex, ThousandRandomItemsAreUnique) {
  const auto sem = as_embeddings(random_points(1000, 16, 1), EmbeddingSource::semantic);
  const auto beh = as_embeddings(random_points(1000, 16, 2), EmbeddingSource::behavioral);
  IndexConfig cfg;
  cfg.n_init = 2;
  cfg.max_kmeans_iters = 20;
  const auto idx = build_index(sem, beh, cfg);
  std::set<std::vector<std::string>> seen;
  for (const auto& i : idx) seen.insert(i.tokens);
  EXPECT_EQ(seen.size(), 1000u);
  auto v = Vocab::byte_level();
  v.extend(vocab_tokens(cfg, disambig_count(idx)));
  const auto trie = IndexTrie::build(idx, v);
  EXPECT_EQ(trie.leaf_count(), 1000u);
}

TEST(UnifiedIndex, CompositionShapes) {
  const auto sem = as_embeddings(random_points(50, 4, 1), EmbeddingSource::semantic);
  const auto beh = as_embeddings(random_points(50, 4, 2), EmbeddingSource::behavioral);
  IndexConfig cfg;
  cfg.k = 4;
  cfg.depth_s = 3;
  cfg.depth_b = 2;
  cfg.n_init = 1;
  for (auto comp : {IndexComposition::unit, IndexComposition::semantic, IndexComposition::behavior,
                    IndexComposition::random}) {
    cfg.composition = comp;
    const size_t expect = comp == IndexComposition::semantic ? 3 : comp == IndexComposition::behavior ? 2 : 5;
    for (const auto& i : build_index(sem, beh, cfg)) {
      const size_t n = i.semantic_codes.size() + i.behavioral_codes.size();
      EXPECT_EQ(n, expect) << to_string(comp);
      EXPECT_EQ(i.tokens.size(), n + (i.disambig ? 1 : 0));
      // Semantic tokens strictly precede behavioural ones.
      for (size_t t = 0; t < i.semantic_codes.size(); ++t) EXPECT_EQ(i.tokens[t].substr(0, 3), "<s_");
    }
  }
  EXPECT_EQ(parse_composition("behavior"), IndexComposition::behavior);
  EXPECT_GENREC_ERROR(parse_composition("both"), "invalid_config");
}

TEST(UnifiedIndex, RandomCodesAreUniformInRange) {
  const auto codes = random_codes(4000, 8, 2, 5);
  std::vector<int> hist(8, 0);
  for (const auto& c : codes) ++hist[static_cast<size_t>(c[0])];
  for (int h : hist) EXPECT_NEAR(h, 500, 100);
  EXPECT_EQ(random_codes(10, 8, 2, 5), random_codes(10, 8, 2, 5));
}

TEST(UnifiedIndex, CollisionsGetDisambiguationInIdOrder) {
  const CodeTable sem = {{1, 2}, {1, 2}, {0, 0}, {1, 2}};
  const CodeTable beh = {{3}, {3}, {3}, {3}};
  const auto idx = assemble_unified_index(sem, beh, {"d", "b", "a", "c"});
  EXPECT_EQ(idx[1].disambig, 0);  // "b"
  EXPECT_EQ(idx[3].disambig, 1);  // "c"
  EXPECT_EQ(idx[0].disambig, 2);  // "d"
  EXPECT_FALSE(idx[2].disambig.has_value());
  EXPECT_EQ(idx[0].tokens.back(), "<d_2>");
  EXPECT_EQ(disambig_count(idx), 3);
  EXPECT_GENREC_ERROR(assemble_unified_index(sem, beh, {"x"}), "invalid_argument");
}

TEST(UnifiedIndex, VocabTokensListEveryCodeOnceThenCon) {
  IndexConfig cfg;
  const auto toks = vocab_tokens(cfg, 0);
  EXPECT_EQ(toks.size(), 32u * 8u + 1u);
  EXPECT_EQ(toks.front(), "<s_0_0>");
  EXPECT_EQ(toks.back(), kConToken);
  EXPECT_EQ(std::set<std::string>(toks.begin(), toks.end()).size(), toks.size());
}

TEST(UnifiedIndex, SerializeRoundTrip) {
  const auto sem = as_embeddings(random_points(30, 4, 1), EmbeddingSource::semantic);
  const auto beh = as_embeddings(random_points(30, 4, 2), EmbeddingSource::behavioral);
  IndexConfig cfg;
  cfg.k = 3;
  cfg.depth_s = 2;
  cfg.depth_b = 1;
  cfg.n_init = 1;
  cfg.seed = 77;
  const auto idx = build_index(sem, beh, cfg);
  const auto text = serialize_index(idx, cfg, "fp");
  IndexConfig back_cfg;
  const auto back = parse_index(text, &back_cfg);
  ASSERT_EQ(back.size(), idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    EXPECT_EQ(back[i].item_id, idx[i].item_id);
    EXPECT_EQ(back[i].tokens, idx[i].tokens);
    EXPECT_EQ(back[i].disambig, idx[i].disambig);
  }
  EXPECT_EQ(back_cfg.k, 3);
  EXPECT_EQ(back_cfg.seed, 77u);
  EXPECT_EQ(serialize_index(back, back_cfg, "fp"), text);
}

TEST(Trie, ChildrenSortedAndLookupWorks) {
  const auto trie = IndexTrie::build({{5, 1}, {3, 2}, {5, 0}, {3, 9, 4}});
  const auto root = trie.children(trie.root());
  ASSERT_EQ(root.size(), 2u);
  EXPECT_EQ(root[0].first, 3);
  EXPECT_EQ(root[1].first, 5);
  EXPECT_EQ(trie.lookup(std::vector<int>{5, 0}), 2);
  EXPECT_EQ(trie.lookup(std::vector<int>{3, 9, 4}), 3);
  EXPECT_FALSE(trie.lookup(std::vector<int>{3, 9}).has_value());
  EXPECT_FALSE(trie.lookup(std::vector<int>{7}).has_value());
  EXPECT_EQ(trie.leaf_count(), 4u);
  EXPECT_EQ(trie.max_depth(), 3);
  EXPECT_EQ(trie.child(trie.root(), 4), -1);
}

TEST(Trie, RejectsDuplicatesAndPrefixes) {
  EXPECT_GENREC_ERROR(IndexTrie::build({{1, 2}, {1, 2}}), "duplicate_index");
  EXPECT_GENREC_ERROR(IndexTrie::build({{1, 2}, {1, 2, 3}}), "duplicate_index");
  EXPECT_GENREC_ERROR(IndexTrie::build({{1, 2, 3}, {1, 2}}), "duplicate_index");
  EXPECT_GENREC_ERROR(IndexTrie::build({{}}), "invalid_index");
}
