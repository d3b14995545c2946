#pragma once

#include <string>
#include <vector>

#include "genrec/corpus.hpp"
#include "genrec/decode.hpp"
#include "genrec/tasks.hpp"

namespace genrec {

// 1 when `target` is among the first k entries of `ranked`.
int recall_at_k(const std::vector<std::string>& ranked, const std::string& target, int k);
// 1 / log2(1 + rank) for a target at 1-based rank <= k, else 0.
double ndcg_at_k(const std::vector<std::string>& ranked, const std::string& target, int k);

struct EvalConfig {
  std::vector<int> ks{5, 10};
  int beam = 20;
  bool test_mode = true;        // test histories include the validation item
  bool exclude_history = true;  // drop history items from the ranked list
  int max_users = 0;            // 0 evaluates every user
  bool use_adapter = true;
  int template_id = 0;
};

struct UserResult {
  std::string user_id;
  std::string target;
  int rank = 0;  // 1-based, 0 when absent from the list
  std::vector<std::string> ranked;
};

struct MetricsReport {
  std::vector<int> ks;
  std::vector<double> recall;  // mean over users, aligned with ks
  std::vector<double> ndcg;
  int users = 0;
  std::string fingerprint;
  std::vector<UserResult> per_user;

  double recall_at(int k) const;
  double ndcg_at(int k) const;
  // One JSON record per metric, in a fixed order.
  std::string to_jsonl() const;
};

// Averages per-user metrics in user order.
MetricsReport aggregate(const std::vector<UserResult>& results, const std::vector<int>& ks);

MetricsReport evaluate(const Model<float>& model, const Splits& splits, const TaskRenderer& renderer,
                       const IndexTrie& trie, const std::vector<std::string>& trie_items, const EvalConfig& cfg);

}  // namespace genrec
