#include "genrec/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace genrec {

TransformerStepModel::TransformerStepModel(const Model<float>& model, bool use_adapter)
    : model_(model), use_adapter_(use_adapter) {}

int TransformerStepModel::begin(std::span<const int> prompt) {
  dec_ = std::make_unique<IncrementalDecoder<float>>(model_, use_adapter_);
  return dec_->begin(prompt);
}

std::vector<int> TransformerStepModel::extend(std::span<const std::pair<int, int>> state_token) {
  if (!dec_) throw Error("invalid_argument", "extend before begin");
  return dec_->extend(state_token);
}

RowVec<double> TransformerStepModel::logits(int state) const {
  if (!dec_) throw Error("invalid_argument", "logits before begin");
  return dec_->logits(state).cast<double>();
}

namespace {

struct Beam {
  int state;
  int node;
  double score;
  std::vector<int> tokens;
};

bool better(double sa, const std::vector<int>& ta, double sb, const std::vector<int>& tb) {
  if (sa != sb) return sa > sb;
  return ta < tb;
}

// log-softmax restricted to `children`.
std::vector<double> child_log_probs(const RowVec<double>& logits, std::span<const std::pair<int, int>> children) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& [tok, node] : children) mx = std::max(mx, logits(tok));
  double z = 0;
  for (const auto& [tok, node] : children) z += std::exp(logits(tok) - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out;
  out.reserve(children.size());
  for (const auto& [tok, node] : children) out.push_back(logits(tok) - lse);
  return out;
}

}  // namespace

std::vector<Ranked> constrained_beam_search(StepModel& model, std::span<const int> prompt, const IndexTrie& trie,
                                            int beam_size) {
  if (beam_size < 1) throw Error("invalid_argument", "beam size must be at least 1");
  if (trie.leaf_count() == 0) throw Error("invalid_argument", "empty trie");
  std::vector<Beam> live{{model.begin(prompt), trie.root(), 0.0, {}}};
  std::vector<Ranked> finished;

  while (!live.empty()) {
    std::vector<Beam> cand;
    for (const auto& b : live) {
      const auto children = trie.children(b.node);
      const auto lp = child_log_probs(model.logits(b.state), children);
      for (size_t c = 0; c < children.size(); ++c) {
        Beam nb{b.state, children[c].second, b.score + lp[c], b.tokens};
        nb.tokens.push_back(children[c].first);
        cand.push_back(std::move(nb));
      }
    }
    // Finished paths compete for the same slots as live ones.
    std::sort(cand.begin(), cand.end(),
              [](const Beam& a, const Beam& b) { return better(a.score, a.tokens, b.score, b.tokens); });
    const size_t keep = std::min(cand.size(), static_cast<size_t>(beam_size) - std::min<size_t>(finished.size(), static_cast<size_t>(beam_size)));
    std::vector<Beam> next;
    std::vector<std::pair<int, int>> requests;
    for (size_t i = 0; i < keep; ++i) {
      auto& c = cand[i];
      if (trie.is_leaf(c.node)) {
        finished.push_back({trie.leaf_item(c.node), c.score, std::move(c.tokens)});
      } else {
        requests.emplace_back(c.state, c.tokens.back());
        next.push_back(std::move(c));
      }
    }
    if (!requests.empty()) {
      const auto states = model.extend(requests);
      for (size_t i = 0; i < next.size(); ++i) next[i].state = states[i];
    }
    live = std::move(next);
  }
  std::sort(finished.begin(), finished.end(),
            [](const Ranked& a, const Ranked& b) { return better(a.log_prob, a.tokens, b.log_prob, b.tokens); });
  return finished;
}

std::vector<Recommendation> recommend(StepModel& model, std::span<const int> prompt, const IndexTrie& trie,
                                      const std::vector<std::string>& trie_items, int k, int beam_size,
                                      const std::set<std::string>& exclude) {
  if (k < 1) throw Error("invalid_argument", "k must be at least 1");
  if (k > beam_size) throw Error("invalid_argument", "k must not exceed the beam size");
  if (prompt.empty()) throw Error("empty_history", "empty prompt");
  std::vector<Recommendation> out;
  for (const auto& r : constrained_beam_search(model, prompt, trie, beam_size)) {
    const auto& id = trie_items.at(static_cast<size_t>(r.item));
    if (exclude.count(id)) continue;
    out.push_back({id, r.log_prob});
    if (static_cast<int>(out.size()) == k) break;
  }
  return out;
}

}  // namespace genrec
