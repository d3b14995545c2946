#include "genrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace genrec {

namespace {

int rank_of(const std::vector<std::string>& ranked, const std::string& target) {
  for (size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i] == target) return static_cast<int>(i) + 1;
  return 0;
}

void check_k(int k) {
  if (k < 1) throw Error("invalid_argument", "k must be at least 1");
}

}  // namespace

int recall_at_k(const std::vector<std::string>& ranked, const std::string& target, int k) {
  check_k(k);
  const int r = rank_of(ranked, target);
  return r > 0 && r <= k ? 1 : 0;
}

double ndcg_at_k(const std::vector<std::string>& ranked, const std::string& target, int k) {
  check_k(k);
  const int r = rank_of(ranked, target);
  return r > 0 && r <= k ? 1.0 / std::log2(1.0 + r) : 0.0;
}

double MetricsReport::recall_at(int k) const {
  for (size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return recall[i];
  throw Error("invalid_argument", "report has no Recall@" + std::to_string(k));
}

double MetricsReport::ndcg_at(int k) const {
  for (size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return ndcg[i];
  throw Error("invalid_argument", "report has no NDCG@" + std::to_string(k));
}

std::string MetricsReport::to_jsonl() const {
  std::string out;
  for (size_t i = 0; i < ks.size(); ++i) {
    for (int m = 0; m < 2; ++m) {
      nlohmann::ordered_json j;
      j["metric"] = (m == 0 ? "recall@" : "ndcg@") + std::to_string(ks[i]);
      j["value"] = m == 0 ? recall[i] : ndcg[i];
      j["users"] = users;
      j["fingerprint"] = fingerprint;
      out += j.dump() + "\n";
    }
  }
  return out;
}

MetricsReport aggregate(const std::vector<UserResult>& results, const std::vector<int>& ks) {
  MetricsReport rep;
  rep.ks = ks;
  rep.recall.assign(ks.size(), 0.0);
  rep.ndcg.assign(ks.size(), 0.0);
  rep.users = static_cast<int>(results.size());
  for (const auto& r : results)
    for (size_t i = 0; i < ks.size(); ++i) {
      rep.recall[i] += recall_at_k(r.ranked, r.target, ks[i]);
      rep.ndcg[i] += ndcg_at_k(r.ranked, r.target, ks[i]);
    }
  if (!results.empty())
    for (size_t i = 0; i < ks.size(); ++i) {
      rep.recall[i] /= static_cast<double>(results.size());
      rep.ndcg[i] /= static_cast<double>(results.size());
    }
  rep.per_user = results;
  return rep;
}

MetricsReport evaluate(const Model<float>& model, const Splits& splits, const TaskRenderer& renderer,
                       const IndexTrie& trie, const std::vector<std::string>& trie_items, const EvalConfig& cfg) {
  if (cfg.ks.empty()) throw Error("invalid_argument", "no cut-offs requested");
  const int max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  if (max_k > cfg.beam) throw Error("invalid_argument", "largest k exceeds the beam size");
  TransformerStepModel step(model, cfg.use_adapter);
  std::vector<UserResult> results;
  for (const auto& u : splits.users) {
    if (cfg.max_users > 0 && static_cast<int>(results.size()) >= cfg.max_users) break;
    UserResult r;
    r.user_id = u.user_id;
    r.target = cfg.test_mode ? u.test : u.valid;
    if (!renderer.has_item(r.target)) throw Error("unindexed_item", "target " + r.target + " has no index");
    const auto history = eval_history(u, cfg.test_mode);
    const auto prompt = renderer.srt_prompt(history, cfg.template_id);
    std::set<std::string> exclude;
    if (cfg.exclude_history) exclude.insert(history.begin(), history.end());
    for (const auto& rec : recommend(step, prompt, trie, trie_items, cfg.beam, cfg.beam, exclude))
      r.ranked.push_back(rec.item_id);
    r.rank = rank_of(r.ranked, r.target);
    results.push_back(std::move(r));
  }
  return aggregate(results, cfg.ks);
}

}  // namespace genrec
