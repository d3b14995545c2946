#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genrec/embed.hpp"
#include "genrec/tensor.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

// Which exogenous signals feed the item index.
enum class IndexComposition { random, semantic, behavior, unit };

const char* to_string(IndexComposition c);
IndexComposition parse_composition(std::string_view s);

struct IndexConfig {
  int k = 32;
  int depth_s = 4;
  int depth_b = 4;
  uint64_t seed = 0;
  int max_kmeans_iters = 50;
  // k-means++ restarts per node; the lowest-inertia run wins.
  int n_init = 8;
  IndexComposition composition = IndexComposition::unit;

  void validate() const;
  int semantic_levels() const;
  int behavioral_levels() const;
};

using CodeTable = std::vector<std::vector<int>>;

struct ItemIndex {
  std::string item_id;
  std::vector<int> semantic_codes;
  std::vector<int> behavioral_codes;
  std::optional<int> disambig;
  std::vector<std::string> tokens;
};

// Number of distinct code paths of a k-ary tree of the given depth.
uint64_t index_capacity(uint64_t k, int depth);

std::string semantic_token(int level, int code);
std::string behavioral_token(int level, int code);
std::string disambig_token(int j);

// Flat k-means over `points` (rows). k-means++ seeding, Lloyd iterations,
// nearest-centroid ties to the lower centroid, empty clusters re-seeded at
// the farthest member of the largest cluster. Returns a cluster label per
// row, relabelled so labels appear in order of their first row.
std::vector<int> kmeans(const MatD& points, int k, uint64_t seed, int max_iters, int n_init);

// Codes of every row at every level: level 0 clusters all rows, deeper
// levels recluster each parent cluster's members. Nodes with fewer than k
// members only emit codes for occupied clusters.
CodeTable hierarchical_kmeans(const MatF& embeddings, int k, int depth, uint64_t seed, int max_iters,
                              int n_init = 8);

CodeTable random_codes(size_t n, int k, int depth, uint64_t seed);

// Semantic block then behavioural block; items whose full code sequences
// collide get a disambiguation suffix numbered in item-id order.
std::vector<ItemIndex> assemble_unified_index(const CodeTable& sem_codes, const CodeTable& beh_codes,
                                              const std::vector<std::string>& item_ids);

// Builds the index for the configured composition. Both matrices must list
// the same items in the same order.
std::vector<ItemIndex> build_index(const EmbeddingMatrix& semantic, const EmbeddingMatrix& behavioral,
                                   const IndexConfig& cfg);

int disambig_count(const std::vector<ItemIndex>& indices);

// Level-tagged index tokens, disambiguation tokens, then <CON>.
std::vector<std::string> vocab_tokens(const IndexConfig& cfg, int n_disambig);

std::string serialize_index(const std::vector<ItemIndex>& indices, const IndexConfig& cfg,
                            const std::string& fingerprint);
std::vector<ItemIndex> parse_index(std::string_view text, IndexConfig* cfg = nullptr);

// Prefix tree over item token-id sequences. Leaves correspond one-to-one
// with items; children are kept sorted by token id.
class IndexTrie {
 public:
  static IndexTrie build(const std::vector<std::vector<int>>& sequences);
  static IndexTrie build(const std::vector<ItemIndex>& indices, const Vocab& vocab);

  int root() const { return 0; }
  std::span<const std::pair<int, int>> children(int node) const;
  int child(int node, int token) const;  // -1 when absent
  int leaf_item(int node) const;         // -1 for internal nodes
  bool is_leaf(int node) const { return leaf_item(node) >= 0; }
  size_t node_count() const { return nodes_.size(); }
  size_t leaf_count() const { return leaves_; }
  int max_depth() const { return max_depth_; }
  std::optional<int> lookup(std::span<const int> tokens) const;
  // Token sequence of item `item` (in build order).
  const std::vector<int>& sequence(int item) const { return sequences_[static_cast<size_t>(item)]; }
  size_t item_count() const { return sequences_.size(); }

 private:
  struct Node {
    std::vector<std::pair<int, int>> children;
    int item = -1;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<int>> sequences_;
  size_t leaves_ = 0;
  int max_depth_ = 0;
};

std::vector<int> index_token_ids(const ItemIndex& index, const Vocab& vocab);

}  // namespace genrec
