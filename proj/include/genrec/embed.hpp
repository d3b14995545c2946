#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "genrec/common.hpp"
#include "genrec/corpus.hpp"
#include "genrec/tensor.hpp"

namespace genrec {

enum class EmbeddingSource : uint32_t { semantic = 0, behavioral = 1 };

const char* to_string(EmbeddingSource s);

// One row per item, rows in item-registry order.
struct EmbeddingMatrix {
  std::vector<std::string> item_ids;
  MatF vectors;
  EmbeddingSource source = EmbeddingSource::semantic;
  uint64_t seed = 0;
  std::string fingerprint;

  int dim() const { return static_cast<int>(vectors.cols()); }
  size_t size() const { return item_ids.size(); }

  // Throws if rows and ids disagree or any entry is non-finite.
  void validate() const;
  // Row index of `item_id`; throws if absent.
  int row_of(const std::string& item_id) const;

 private:
  mutable std::unordered_map<std::string, int> lookup_;
};

std::string serialize_embeddings(const EmbeddingMatrix& m);
EmbeddingMatrix parse_embeddings(std::string_view bytes);

// Rescales every row to unit L2 norm (zero rows stay zero), or, when
// `normalize` is false, clips row norms to `norm_cap`.
void normalize_rows(EmbeddingMatrix& m, bool normalize = true, float norm_cap = 1.0f);

// Lowercases ASCII, collapses whitespace runs to one space, trims both ends.
std::string normalize_text(std::string_view text);
// Title and description joined with " | " (title alone when the description is empty).
std::string item_text(const ItemRecord& item);

// Produces per-position hidden states for a normalised text.
class SemanticEmbedder {
 public:
  virtual ~SemanticEmbedder() = default;
  virtual int dim() const = 0;
  virtual MatD hidden_states(std::string_view normalized_text) const = 0;
};

// Deterministic character n-gram encoder. Position t's hidden state is
// tanh of the sum of hashed random projections of the 1..max_n grams ending
// at t. The projection of gram g in dimension j is
//   u = mix64(mix64(seed) ^ (fnv1a64(g) + 0x9E3779B97F4A7C15 * (j + 1)))
//   v = (u >> 11) * 2^-53 * 2 - 1
class HashedNgramEmbedder final : public SemanticEmbedder {
 public:
  HashedNgramEmbedder(int dim, uint64_t seed, int max_n = 3);
  int dim() const override { return dim_; }
  MatD hidden_states(std::string_view normalized_text) const override;

 private:
  int dim_;
  uint64_t seed_hash_;
  int max_n_;
};

// Mean of the embedder's hidden states over the item's normalised text.
std::vector<float> semantic_embed(const ItemRecord& item, const SemanticEmbedder& embedder);

// Embeds every item (in id order) and L2-normalises rows.
EmbeddingMatrix embed_catalog(const std::map<std::string, ItemRecord>& items,
                              const SemanticEmbedder& embedder, uint64_t seed);

struct BehaviorConfig {
  int dim = 64;
  int epochs = 30;
  int negatives = 16;
  int max_history = kDefaultMaxHistory;
  double lr = 0.01;
  uint64_t seed = 7;
};

// Two-tower next-item scorer over item ids only. The history tower pools
// its own embedding table with attention (learned query plus a recency
// bias); the item tower is a plain embedding table, which is what gets
// exported as the behavioural embedding.
class BehaviorEncoder {
 public:
  BehaviorEncoder(std::vector<std::string> item_ids, const BehaviorConfig& cfg);

  const std::vector<std::string>& item_ids() const { return item_ids_; }
  // Scores every item as the next interaction after `history` (item rows).
  std::vector<double> score(const std::vector<int>& history) const;
  EmbeddingMatrix embeddings() const;

  // One pass of sampled-softmax training over (history, next) pairs.
  double train_epoch(const std::vector<std::vector<int>>& sequences, Rng& rng);

 private:
  RowVec<double> pool(const std::vector<int>& history, std::vector<double>* attn) const;

  std::vector<std::string> item_ids_;
  BehaviorConfig cfg_;
  MatD history_table_;
  MatD item_table_;
  RowVec<double> query_;
  RowVec<double> recency_;
  // Adam moments, one per table entry.
  MatD m_hist_, v_hist_, m_item_, v_item_;
  RowVec<double> m_query_, v_query_, m_rec_, v_rec_;
  int64_t step_ = 0;
};

// Trains on the training sequences only (no text). Rows come out
// L2-normalised and in `item_ids` order.
EmbeddingMatrix train_behavior_encoder(const Splits& splits, const std::vector<std::string>& item_ids,
                                       const BehaviorConfig& cfg, BehaviorEncoder* trained = nullptr);

}  // namespace genrec
