#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genrec/corpus.hpp"
#include "genrec/embed.hpp"
#include "genrec/indexer.hpp"
#include "genrec/tensor.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

enum class TaskKind { srt, sem_recon, pref_und };
const char* to_string(TaskKind t);

enum class ReconDirection { index_to_text, text_to_index };

struct TrainingExample {
  std::vector<int> tokens;
  // loss_mask[i] marks tokens[i] as a prediction target (of position i - 1).
  std::vector<uint8_t> loss_mask;
  TaskKind task = TaskKind::srt;
  int con_position = -1;
  std::optional<std::string> target_item;

  // Next-token target per position: tokens[i + 1] where masked, else -1.
  std::vector<int> next_token_targets() const;
};

inline constexpr int kNumTemplates = 3;

// Instruction text of every template, by task then template id. Index
// tokens and item text are inserted after the instruction.
const std::vector<std::string>& task_templates(TaskKind task, ReconDirection dir = ReconDirection::index_to_text);

// Deterministic template choice for a user (or item) in a given epoch.
int template_for(const std::string& key, int epoch);

// Top-frequency title keywords over a history, most frequent first, ties
// broken alphabetically. Keywords are lowercase alphanumeric runs of at
// least three characters that are not stop words.
std::vector<std::string> preference_keywords(const std::vector<std::string>& history,
                                             const std::map<std::string, ItemRecord>& items, size_t top_n = 3);
std::string preference_summary(const std::vector<std::string>& history,
                               const std::map<std::string, ItemRecord>& items);

// Renders examples for the three modelling tasks over a fixed index and
// vocabulary. Layouts (all start with <bos>):
//   SRT       instruction, history index blocks, target index, <CON>
//   SemRecon  instruction, unified index, " = ", title       (index to text)
//             instruction, title, " = ", unified index       (text to index)
//   PrefUnd   instruction, history index blocks, " = ", summary
// Only the output region after the instruction input carries loss.
class TaskRenderer {
 public:
  TaskRenderer(const Vocab& vocab, const std::vector<ItemIndex>& indices,
               const std::map<std::string, ItemRecord>* items, int context_len,
               int max_history = kDefaultMaxHistory);

  TrainingExample srt(const std::vector<std::string>& history, const std::string& target, int template_id) const;
  // Inference prompt: the SRT layout without target and <CON>.
  std::vector<int> srt_prompt(const std::vector<std::string>& history, int template_id = 0) const;
  TrainingExample semantic_reconstruction(const std::string& item_id, ReconDirection dir, int template_id) const;
  TrainingExample preference(const std::vector<std::string>& history, int template_id) const;

  const std::vector<int>& item_tokens(const std::string& item_id) const;
  bool has_item(const std::string& item_id) const { return tokens_.count(item_id) > 0; }
  const Vocab& vocab() const { return vocab_; }
  int context_len() const { return context_len_; }

 private:
  std::vector<int> text(std::string_view s) const { return vocab_.encode_text(s); }
  // Keeps the most recent blocks that fit in `budget` tokens.
  std::vector<std::string> fit_history(const std::vector<std::string>& history, int budget) const;

  const Vocab& vocab_;
  const std::map<std::string, ItemRecord>* items_;
  std::unordered_map<std::string, std::vector<int>> tokens_;
  int context_len_;
  int max_history_;
  int con_id_;
};

// In-batch contrastive targets for one group of SRT examples.
struct GctBatch {
  MatF z_semantic;    // N x d_s, row i the positive of example i
  MatF z_behavioral;  // N x d_b
  // excluded(i, j) = 1 when j != i shares example i's target; such
  // duplicates are dropped from i's negatives instead of counted.
  MatF excluded;
};

GctBatch build_gct_batch(const std::vector<std::string>& target_items, const EmbeddingMatrix& semantic,
                         const EmbeddingMatrix& behavioral);

// One JSON line per example for inspection.
std::string dump_example(const TrainingExample& ex, const Vocab& vocab);

}  // namespace genrec
