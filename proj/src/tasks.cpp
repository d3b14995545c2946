#include "genrec/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace genrec {

const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::srt: return "srt";
    case TaskKind::sem_recon: return "sem_recon";
    case TaskKind::pref_und: return "pref_und";
  }
  return "?";
}

std::vector<int> TrainingExample::next_token_targets() const {
  std::vector<int> out(tokens.size(), -1);
  for (size_t i = 1; i < tokens.size(); ++i)
    if (loss_mask[i]) out[i - 1] = tokens[i];
  return out;
}

const std::vector<std::string>& task_templates(TaskKind task, ReconDirection dir) {
  static const std::vector<std::string> srt = {"next item after: ", "user history: ", "recommend for: "};
  static const std::vector<std::string> to_text = {"title of ", "name the item ", "what is "};
  static const std::vector<std::string> to_index = {"index of ", "find the item ", "which item is "};
  static const std::vector<std::string> pref = {"user likes? ", "describe taste: ", "preferences of: "};
  switch (task) {
    case TaskKind::srt: return srt;
    case TaskKind::sem_recon: return dir == ReconDirection::index_to_text ? to_text : to_index;
    case TaskKind::pref_und: return pref;
  }
  return srt;
}

int template_for(const std::string& key, int epoch) {
  return static_cast<int>(hash_combine(fnv1a64(key), static_cast<uint64_t>(epoch)) % kNumTemplates);
}

std::vector<std::string> preference_keywords(const std::vector<std::string>& history,
                                             const std::map<std::string, ItemRecord>& items, size_t top_n) {
  static const std::unordered_set<std::string> stop = {"the", "and", "for", "with", "from", "this", "that",
                                                       "you", "your", "are", "its", "our", "all", "new"};
  std::map<std::string, int> counts;
  for (const auto& id : history) {
    auto it = items.find(id);
    if (it == items.end()) continue;
    std::string word;
    auto flush = [&] {
      if (word.size() >= 3 && !stop.count(word)) ++counts[word];
      word.clear();
    };
    for (unsigned char c : it->second.title) {
      if (std::isalnum(c)) word.push_back(static_cast<char>(std::tolower(c)));
      else flush();
    }
    flush();
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (size_t i = 0; i < ranked.size() && i < top_n; ++i) out.push_back(ranked[i].first);
  return out;
}

std::string preference_summary(const std::vector<std::string>& history,
                               const std::map<std::string, ItemRecord>& items) {
  const auto words = preference_keywords(history, items);
  if (words.empty()) return "likes: nothing specific";
  std::string s = "likes: ";
  for (size_t i = 0; i < words.size(); ++i) s += (i ? ", " : "") + words[i];
  return s;
}

TaskRenderer::TaskRenderer(const Vocab& vocab, const std::vector<ItemIndex>& indices,
                           const std::map<std::string, ItemRecord>* items, int context_len, int max_history)
    : vocab_(vocab), items_(items), context_len_(context_len), max_history_(max_history) {
  if (max_history < 1) throw Error("invalid_argument", "max_history must be at least 1");
  if (!vocab.contains(kConToken)) throw Error("invalid_argument", "vocabulary lacks the <CON> token");
  con_id_ = vocab.id(kConToken);
  for (const auto& ix : indices) tokens_.emplace(ix.item_id, index_token_ids(ix, vocab));
}

const std::vector<int>& TaskRenderer::item_tokens(const std::string& item_id) const {
  auto it = tokens_.find(item_id);
  if (it == tokens_.end()) throw Error("unindexed_item", "item " + item_id + " has no index");
  return it->second;
}

std::vector<std::string> TaskRenderer::fit_history(const std::vector<std::string>& history, int budget) const {
  const auto recent = truncate_history(history, max_history_);
  std::vector<std::string> kept;
  int used = 0;
  for (auto it = recent.rbegin(); it != recent.rend(); ++it) {
    const int n = static_cast<int>(item_tokens(*it).size());
    if (used + n > budget) break;
    used += n;
    kept.push_back(*it);
  }
  std::reverse(kept.begin(), kept.end());
  return kept;
}

namespace {

void append(TrainingExample& ex, const std::vector<int>& toks, bool loss) {
  ex.tokens.insert(ex.tokens.end(), toks.begin(), toks.end());
  ex.loss_mask.insert(ex.loss_mask.end(), toks.size(), loss ? 1 : 0);
}

void check_template(int template_id) {
  if (template_id < 0 || template_id >= kNumTemplates)
    throw Error("invalid_argument", "template id out of range: " + std::to_string(template_id));
}

}  // namespace

TrainingExample TaskRenderer::srt(const std::vector<std::string>& history, const std::string& target,
                                  int template_id) const {
  check_template(template_id);
  if (history.empty()) throw Error("empty_history", "sequence example needs at least one history item");
  const auto& tgt = item_tokens(target);
  const auto instr = text(task_templates(TaskKind::srt)[static_cast<size_t>(template_id)]);
  const int budget = context_len_ - 2 - static_cast<int>(instr.size() + tgt.size());
  const auto kept = fit_history(history, budget);
  if (kept.empty()) throw Error("sequence_too_long", "no history item fits into the context window");
  TrainingExample ex;
  ex.task = TaskKind::srt;
  ex.target_item = target;
  append(ex, {vocab_.bos()}, false);
  append(ex, instr, false);
  for (const auto& id : kept) append(ex, item_tokens(id), false);
  append(ex, tgt, true);
  append(ex, {con_id_}, false);
  ex.con_position = static_cast<int>(ex.tokens.size()) - 1;
  return ex;
}

std::vector<int> TaskRenderer::srt_prompt(const std::vector<std::string>& history, int template_id) const {
  check_template(template_id);
  if (history.empty()) throw Error("empty_history", "recommendation needs at least one history item");
  const auto instr = text(task_templates(TaskKind::srt)[static_cast<size_t>(template_id)]);
  // Leave room for the longest item index and <CON> as in training.
  size_t longest = 0;
  for (const auto& [id, t] : tokens_) longest = std::max(longest, t.size());
  const int budget = context_len_ - 2 - static_cast<int>(instr.size() + longest);
  const auto kept = fit_history(history, budget);
  if (kept.empty()) throw Error("sequence_too_long", "no history item fits into the context window");
  std::vector<int> out{vocab_.bos()};
  out.insert(out.end(), instr.begin(), instr.end());
  for (const auto& id : kept) {
    const auto& t = item_tokens(id);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

TrainingExample TaskRenderer::semantic_reconstruction(const std::string& item_id, ReconDirection dir,
                                                      int template_id) const {
  check_template(template_id);
  const auto& idx = item_tokens(item_id);
  const ItemRecord* rec = nullptr;
  if (items_) {
    auto it = items_->find(item_id);
    if (it != items_->end()) rec = &it->second;
  }
  if (!rec || rec->title.empty()) throw Error("missing_title", "item " + item_id + " has no title");
  const auto instr = text(task_templates(TaskKind::sem_recon, dir)[static_cast<size_t>(template_id)]);
  const auto sep = text(" = ");
  auto title = text(rec->title);
  const int room = context_len_ - 1 - static_cast<int>(instr.size() + sep.size() + idx.size());
  if (room < 1) throw Error("sequence_too_long", "item index does not fit into the context window");
  if (static_cast<int>(title.size()) > room) title.resize(static_cast<size_t>(room));

  TrainingExample ex;
  ex.task = TaskKind::sem_recon;
  ex.target_item = item_id;
  append(ex, {vocab_.bos()}, false);
  append(ex, instr, false);
  if (dir == ReconDirection::index_to_text) {
    append(ex, idx, false);
    append(ex, sep, false);
    append(ex, title, true);
  } else {
    append(ex, title, false);
    append(ex, sep, false);
    append(ex, idx, true);
  }
  return ex;
}

TrainingExample TaskRenderer::preference(const std::vector<std::string>& history, int template_id) const {
  check_template(template_id);
  if (history.empty()) throw Error("empty_history", "preference example needs at least one history item");
  static const std::map<std::string, ItemRecord> no_items;
  const auto summary = text(preference_summary(truncate_history(history, max_history_), items_ ? *items_ : no_items));
  const auto instr = text(task_templates(TaskKind::pref_und)[static_cast<size_t>(template_id)]);
  const auto sep = text(" = ");
  const int budget = context_len_ - 1 - static_cast<int>(instr.size() + sep.size() + summary.size());
  const auto kept = fit_history(history, budget);
  if (kept.empty()) throw Error("sequence_too_long", "no history item fits into the context window");
  TrainingExample ex;
  ex.task = TaskKind::pref_und;
  append(ex, {vocab_.bos()}, false);
  append(ex, instr, false);
  for (const auto& id : kept) append(ex, item_tokens(id), false);
  append(ex, sep, false);
  append(ex, summary, true);
  return ex;
}

GctBatch build_gct_batch(const std::vector<std::string>& target_items, const EmbeddingMatrix& semantic,
                         const EmbeddingMatrix& behavioral) {
  const auto n = static_cast<Eigen::Index>(target_items.size());
  GctBatch b;
  b.z_semantic.resize(n, semantic.dim());
  b.z_behavioral.resize(n, behavioral.dim());
  b.excluded = MatF::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& id = target_items[static_cast<size_t>(i)];
    b.z_semantic.row(i) = semantic.vectors.row(semantic.row_of(id));
    b.z_behavioral.row(i) = behavioral.vectors.row(behavioral.row_of(id));
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && target_items[static_cast<size_t>(j)] == id) b.excluded(i, j) = 1;
  }
  return b;
}

std::string dump_example(const TrainingExample& ex, const Vocab& vocab) {
  nlohmann::json j;
  j["task"] = to_string(ex.task);
  std::vector<std::string> names;
  for (int t : ex.tokens) names.push_back(vocab.name(t));
  j["tokens"] = names;
  j["loss_mask"] = ex.loss_mask;
  j["con_position"] = ex.con_position;
  j["target_item"] = ex.target_item ? nlohmann::json(*ex.target_item) : nlohmann::json(nullptr);
  j["text"] = vocab.decode(ex.tokens);
  return j.dump();
}

}  // namespace genrec
