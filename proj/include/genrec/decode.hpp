#pragma once

#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genrec/indexer.hpp"
#include "genrec/model.hpp"

namespace genrec {

// Minimal incremental scoring interface consumed by beam search. States are
// opaque handles; extend() appends one token to each listed state.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual int begin(std::span<const int> prompt) = 0;
  virtual std::vector<int> extend(std::span<const std::pair<int, int>> state_token) = 0;
  virtual RowVec<double> logits(int state) const = 0;
};

// Step model backed by the transformer's key/value cache.
class TransformerStepModel final : public StepModel {
 public:
  TransformerStepModel(const Model<float>& model, bool use_adapter);
  int begin(std::span<const int> prompt) override;
  std::vector<int> extend(std::span<const std::pair<int, int>> state_token) override;
  RowVec<double> logits(int state) const override;

 private:
  const Model<float>& model_;
  bool use_adapter_;
  std::unique_ptr<IncrementalDecoder<float>> dec_;
};

struct Ranked {
  int item = -1;  // trie item number
  double log_prob = 0;
  std::vector<int> tokens;
};

// Beam search restricted to trie paths. Each step renormalises the
// softmax over the current node's children; a path's score is the sum of
// its token log-probabilities. Completed paths occupy beam slots. Results
// are sorted by score descending, ties by token sequence ascending.
std::vector<Ranked> constrained_beam_search(StepModel& model, std::span<const int> prompt, const IndexTrie& trie,
                                            int beam_size);

struct Recommendation {
  std::string item_id;
  double log_prob = 0;
};

// Top-k items after beam search, skipping items in `exclude`.
std::vector<Recommendation> recommend(StepModel& model, std::span<const int> prompt, const IndexTrie& trie,
                                      const std::vector<std::string>& trie_items, int k, int beam_size,
                                      const std::set<std::string>& exclude = {});

}  // namespace genrec
