#include "genrec/indexer.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "genrec/common.hpp"

namespace genrec {

namespace {

using json = nlohmann::json;
constexpr const char* kIndexFormat = "genrec-index";
constexpr int kIndexVersion = 1;

double sq_dist(const MatD& a, Eigen::Index i, const MatD& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

struct KMeansRun {
  std::vector<int> assign;
  double inertia = 0;
};

MatD kmeanspp_seed(const MatD& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  MatD c(k, x.cols());
  std::vector<char> chosen(static_cast<size_t>(n), 0);
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(n)));
  c.row(0) = x.row(first);
  chosen[static_cast<size_t>(first)] = 1;
  std::vector<double> d2(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<size_t>(i)] = sq_dist(x, i, c, 0);
  for (int j = 1; j < k; ++j) {
    double total = 0;
    for (double v : d2) total += v;
    Eigen::Index pick = -1;
    if (total > 0) {
      double r = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[static_cast<size_t>(i)];
        if (r < 0 && d2[static_cast<size_t>(i)] > 0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        // Rounding left r >= 0; take the last point with positive mass.
        for (Eigen::Index i = n - 1; i >= 0; --i)
          if (d2[static_cast<size_t>(i)] > 0) {
            pick = i;
            break;
          }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<size_t>(i)]) {
          pick = i;
          break;
        }
    }
    c.row(j) = x.row(pick);
    chosen[static_cast<size_t>(pick)] = 1;
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<size_t>(i)] = std::min(d2[static_cast<size_t>(i)], sq_dist(x, i, c, j));
  }
  return c;
}

// Single-point moves that strictly lower the inertia, with centroids
// updated incrementally. Escapes many Lloyd fixed points.
void hartigan_refine(const MatD& x, MatD& centroids, std::vector<int>& assign) {
  const Eigen::Index n = x.rows();
  const int k = static_cast<int>(centroids.rows());
  std::vector<int> count(static_cast<size_t>(k), 0);
  for (int a : assign) ++count[static_cast<size_t>(a)];
  for (int pass = 0; pass < 100; ++pass) {
    bool moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = assign[static_cast<size_t>(i)];
      const double na = count[static_cast<size_t>(a)];
      if (na < 2) continue;
      const double cost_out = na / (na - 1) * sq_dist(x, i, centroids, a);
      int best = -1;
      double best_in = cost_out;
      for (int b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = count[static_cast<size_t>(b)];
        const double cost_in = nb / (nb + 1) * sq_dist(x, i, centroids, b);
        if (cost_in < best_in * (1 - 1e-12)) {
          best_in = cost_in;
          best = b;
        }
      }
      if (best < 0) continue;
      const double nb = count[static_cast<size_t>(best)];
      centroids.row(a) = (centroids.row(a) * na - x.row(i)) / (na - 1);
      centroids.row(best) = (centroids.row(best) * nb + x.row(i)) / (nb + 1);
      --count[static_cast<size_t>(a)];
      ++count[static_cast<size_t>(best)];
      assign[static_cast<size_t>(i)] = best;
      moved = true;
    }
    if (!moved) break;
  }
}

KMeansRun lloyd(const MatD& x, MatD centroids, int max_iters) {
  const Eigen::Index n = x.rows();
  const int k = static_cast<int>(centroids.rows());
  KMeansRun run;
  run.assign.assign(static_cast<size_t>(n), -1);
  for (int it = 0; it < std::max(1, max_iters); ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x, i, centroids, 0);
      for (int j = 1; j < k; ++j) {
        const double d = sq_dist(x, i, centroids, j);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (run.assign[static_cast<size_t>(i)] != best) {
        run.assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    // Empty-cluster repair.
    std::vector<int> count(static_cast<size_t>(k), 0);
    for (int a : run.assign) ++count[static_cast<size_t>(a)];
    for (int j = 0; j < k; ++j) {
      if (count[static_cast<size_t>(j)] > 0) continue;
      const int largest = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
      if (count[static_cast<size_t>(largest)] < 2) break;
      Eigen::Index far = -1;
      double far_d = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (run.assign[static_cast<size_t>(i)] != largest) continue;
        const double d = sq_dist(x, i, centroids, largest);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids.row(j) = x.row(far);
      run.assign[static_cast<size_t>(far)] = j;
      --count[static_cast<size_t>(largest)];
      count[static_cast<size_t>(j)] = 1;
      changed = true;
    }
    // Update step.
    MatD sums = MatD::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(run.assign[static_cast<size_t>(i)]) += x.row(i);
    for (int j = 0; j < k; ++j)
      if (count[static_cast<size_t>(j)] > 0) centroids.row(j) = sums.row(j) / count[static_cast<size_t>(j)];
    if (!changed && it > 0) break;
  }
  hartigan_refine(x, centroids, run.assign);
  run.inertia = 0;
  for (Eigen::Index i = 0; i < n; ++i) run.inertia += sq_dist(x, i, centroids, run.assign[static_cast<size_t>(i)]);
  return run;
}

std::vector<int> relabel_by_first_row(const std::vector<int>& assign) {
  std::map<int, int> remap;
  std::vector<int> out(assign.size());
  for (size_t i = 0; i < assign.size(); ++i) {
    auto it = remap.find(assign[i]);
    if (it == remap.end()) it = remap.emplace(assign[i], static_cast<int>(remap.size())).first;
    out[i] = it->second;
  }
  return out;
}

void cluster_node(const MatD& x, const std::vector<int>& members, int level, int depth, int k,
                  uint64_t node_seed, int max_iters, int n_init, CodeTable& codes) {
  if (level == depth) return;
  if (members.size() == 1) {
    for (int l = level; l < depth; ++l) codes[static_cast<size_t>(members[0])][static_cast<size_t>(l)] = 0;
    return;
  }
  MatD pts(static_cast<Eigen::Index>(members.size()), x.cols());
  for (size_t i = 0; i < members.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = x.row(members[i]);
  const std::vector<int> labels = kmeans(pts, k, node_seed, max_iters, n_init);
  const int n_clusters = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> children(static_cast<size_t>(n_clusters));
  for (size_t i = 0; i < members.size(); ++i) {
    codes[static_cast<size_t>(members[i])][static_cast<size_t>(level)] = labels[i];
    children[static_cast<size_t>(labels[i])].push_back(members[i]);
  }
  for (int c = 0; c < n_clusters; ++c)
    cluster_node(x, children[static_cast<size_t>(c)], level + 1, depth, k,
                 hash_combine(node_seed, static_cast<uint64_t>(c) + 1), max_iters, n_init, codes);
}

std::string join_codes(const std::vector<int>& a, const std::vector<int>& b) {
  std::string key;
  for (int c : a) key += std::to_string(c) + ",";
  key += "|";
  for (int c : b) key += std::to_string(c) + ",";
  return key;
}

}  // namespace

const char* to_string(IndexComposition c) {
  switch (c) {
    case IndexComposition::random: return "random";
    case IndexComposition::semantic: return "semantic";
    case IndexComposition::behavior: return "behavior";
    case IndexComposition::unit: return "unit";
  }
  return "unit";
}

IndexComposition parse_composition(std::string_view s) {
  if (s == "random") return IndexComposition::random;
  if (s == "semantic") return IndexComposition::semantic;
  if (s == "behavior" || s == "behavioral") return IndexComposition::behavior;
  if (s == "unit") return IndexComposition::unit;
  throw Error("invalid_config", "unknown index composition " + std::string(s));
}

void IndexConfig::validate() const {
  if (k < 2) throw Error("invalid_config", "index k must be at least 2");
  if (semantic_levels() + behavioral_levels() < 1) throw Error("invalid_config", "index has no levels");
  if ((composition == IndexComposition::unit || composition == IndexComposition::random) &&
      (depth_s < 1 || depth_b < 1))
    throw Error("invalid_config", "index depths must be at least 1");
  if (max_kmeans_iters < 1 || n_init < 1) throw Error("invalid_config", "k-means iterations must be positive");
}

int IndexConfig::semantic_levels() const {
  return composition == IndexComposition::behavior ? 0 : depth_s;
}

int IndexConfig::behavioral_levels() const {
  return composition == IndexComposition::semantic ? 0 : depth_b;
}

uint64_t index_capacity(uint64_t k, int depth) {
  uint64_t cap = 1;
  for (int i = 0; i < depth; ++i) {
    if (cap > std::numeric_limits<uint64_t>::max() / k) throw Error("overflow", "index capacity overflows 64 bits");
    cap *= k;
  }
  return cap;
}

std::string semantic_token(int level, int code) {
  return "<s_" + std::to_string(level) + "_" + std::to_string(code) + ">";
}
std::string behavioral_token(int level, int code) {
  return "<b_" + std::to_string(level) + "_" + std::to_string(code) + ">";
}
std::string disambig_token(int j) { return "<d_" + std::to_string(j) + ">"; }

std::vector<int> kmeans(const MatD& points, int k, uint64_t seed, int max_iters, int n_init) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw Error("empty_input", "k-means on an empty matrix");
  const int kk = static_cast<int>(std::min<Eigen::Index>(k, n));
  if (kk == 1) return std::vector<int>(static_cast<size_t>(n), 0);
  Rng rng(seed);
  KMeansRun best;
  bool have = false;
  for (int r = 0; r < n_init; ++r) {
    KMeansRun run = lloyd(points, kmeanspp_seed(points, kk, rng), max_iters);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return relabel_by_first_row(best.assign);
}

CodeTable hierarchical_kmeans(const MatF& embeddings, int k, int depth, uint64_t seed, int max_iters, int n_init) {
  if (embeddings.rows() == 0) throw Error("empty_input", "hierarchical k-means on an empty matrix");
  if (k < 2 || depth < 1) throw Error("invalid_config", "hierarchical k-means needs k >= 2 and depth >= 1");
  if (!embeddings.allFinite()) throw Error("invalid_embeddings", "embedding contains NaN or Inf");
  const MatD x = embeddings.cast<double>();
  CodeTable codes(static_cast<size_t>(x.rows()), std::vector<int>(static_cast<size_t>(depth), 0));
  std::vector<int> all(static_cast<size_t>(x.rows()));
  std::iota(all.begin(), all.end(), 0);
  cluster_node(x, all, 0, depth, k, mix64(seed), max_iters, n_init, codes);
  return codes;
}

CodeTable random_codes(size_t n, int k, int depth, uint64_t seed) {
  Rng rng(hash_combine(seed, 0xAD));
  CodeTable codes(n, std::vector<int>(static_cast<size_t>(depth)));
  for (auto& row : codes)
    for (auto& c : row) c = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
  return codes;
}

std::vector<ItemIndex> assemble_unified_index(const CodeTable& sem_codes, const CodeTable& beh_codes,
                                              const std::vector<std::string>& item_ids) {
  const size_t n = item_ids.size();
  if ((!sem_codes.empty() && sem_codes.size() != n) || (!beh_codes.empty() && beh_codes.size() != n))
    throw Error("invalid_argument", "code tables do not cover the item set");
  std::vector<ItemIndex> out(n);
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < n; ++i) {
    out[i].item_id = item_ids[i];
    if (!sem_codes.empty()) out[i].semantic_codes = sem_codes[i];
    if (!beh_codes.empty()) out[i].behavioral_codes = beh_codes[i];
    groups[join_codes(out[i].semantic_codes, out[i].behavioral_codes)].push_back(i);
  }
  for (auto& [key, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end(),
              [&](size_t a, size_t b) { return item_ids[a] < item_ids[b]; });
    for (size_t j = 0; j < members.size(); ++j) out[members[j]].disambig = static_cast<int>(j);
  }
  for (auto& idx : out) {
    for (size_t l = 0; l < idx.semantic_codes.size(); ++l)
      idx.tokens.push_back(semantic_token(static_cast<int>(l), idx.semantic_codes[l]));
    for (size_t l = 0; l < idx.behavioral_codes.size(); ++l)
      idx.tokens.push_back(behavioral_token(static_cast<int>(l), idx.behavioral_codes[l]));
    if (idx.disambig) idx.tokens.push_back(disambig_token(*idx.disambig));
  }
  return out;
}

std::vector<ItemIndex> build_index(const EmbeddingMatrix& semantic, const EmbeddingMatrix& behavioral,
                                   const IndexConfig& cfg) {
  cfg.validate();
  if (semantic.item_ids != behavioral.item_ids)
    throw Error("invalid_argument", "semantic and behavioral embeddings list different items");
  const auto& ids = semantic.item_ids;
  CodeTable sem, beh;
  switch (cfg.composition) {
    case IndexComposition::random:
      sem = random_codes(ids.size(), cfg.k, cfg.depth_s, hash_combine(cfg.seed, 1));
      beh = random_codes(ids.size(), cfg.k, cfg.depth_b, hash_combine(cfg.seed, 2));
      break;
    case IndexComposition::semantic:
      sem = hierarchical_kmeans(semantic.vectors, cfg.k, cfg.depth_s, hash_combine(cfg.seed, 1),
                                cfg.max_kmeans_iters, cfg.n_init);
      break;
    case IndexComposition::behavior:
      beh = hierarchical_kmeans(behavioral.vectors, cfg.k, cfg.depth_b, hash_combine(cfg.seed, 2),
                                cfg.max_kmeans_iters, cfg.n_init);
      break;
    case IndexComposition::unit:
      sem = hierarchical_kmeans(semantic.vectors, cfg.k, cfg.depth_s, hash_combine(cfg.seed, 1),
                                cfg.max_kmeans_iters, cfg.n_init);
      beh = hierarchical_kmeans(behavioral.vectors, cfg.k, cfg.depth_b, hash_combine(cfg.seed, 2),
                                cfg.max_kmeans_iters, cfg.n_init);
      break;
  }
  return assemble_unified_index(sem, beh, ids);
}

int disambig_count(const std::vector<ItemIndex>& indices) {
  int n = 0;
  for (const auto& idx : indices)
    if (idx.disambig) n = std::max(n, *idx.disambig + 1);
  return n;
}

std::vector<std::string> vocab_tokens(const IndexConfig& cfg, int n_disambig) {
  std::vector<std::string> out;
  for (int l = 0; l < cfg.semantic_levels(); ++l)
    for (int c = 0; c < cfg.k; ++c) out.push_back(semantic_token(l, c));
  for (int l = 0; l < cfg.behavioral_levels(); ++l)
    for (int c = 0; c < cfg.k; ++c) out.push_back(behavioral_token(l, c));
  for (int j = 0; j < n_disambig; ++j) out.push_back(disambig_token(j));
  out.emplace_back(kConToken);
  return out;
}

std::string serialize_index(const std::vector<ItemIndex>& indices, const IndexConfig& cfg,
                            const std::string& fingerprint) {
  json header{{"format", kIndexFormat},     {"version", kIndexVersion},
              {"fingerprint", fingerprint}, {"k", cfg.k},
              {"depth_s", cfg.depth_s},     {"depth_b", cfg.depth_b},
              {"seed", cfg.seed},           {"composition", to_string(cfg.composition)},
              {"items", indices.size()}};
  std::string out = header.dump() + "\n";
  for (const auto& idx : indices) {
    json rec{{"item_id", idx.item_id},
             {"semantic", idx.semantic_codes},
             {"behavioral", idx.behavioral_codes},
             {"disambig", idx.disambig ? json(*idx.disambig) : json(nullptr)},
             {"tokens", idx.tokens}};
    out += rec.dump() + "\n";
  }
  return out;
}

std::vector<ItemIndex> parse_index(std::string_view text, IndexConfig* cfg) {
  auto lines = split(text, '\n');
  std::vector<ItemIndex> out;
  bool first = true;
  for (const auto& line : lines) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    if (first) {
      if (rec.value("format", "") != kIndexFormat || rec.value("version", 0) != kIndexVersion)
        throw Error("format_error", "not a version-1 index file");
      if (cfg) {
        cfg->k = rec.at("k").get<int>();
        cfg->depth_s = rec.at("depth_s").get<int>();
        cfg->depth_b = rec.at("depth_b").get<int>();
        cfg->seed = rec.at("seed").get<uint64_t>();
        cfg->composition = parse_composition(rec.at("composition").get<std::string>());
      }
      first = false;
      continue;
    }
    ItemIndex idx;
    idx.item_id = rec.at("item_id").get<std::string>();
    idx.semantic_codes = rec.at("semantic").get<std::vector<int>>();
    idx.behavioral_codes = rec.at("behavioral").get<std::vector<int>>();
    if (!rec.at("disambig").is_null()) idx.disambig = rec.at("disambig").get<int>();
    idx.tokens = rec.at("tokens").get<std::vector<std::string>>();
    out.push_back(std::move(idx));
  }
  if (first) throw Error("format_error", "index file has no header");
  return out;
}

std::vector<int> index_token_ids(const ItemIndex& index, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(index.tokens.size());
  for (const auto& t : index.tokens) ids.push_back(vocab.id(t));
  return ids;
}

IndexTrie IndexTrie::build(const std::vector<std::vector<int>>& sequences) {
  IndexTrie trie;
  trie.nodes_.emplace_back();
  trie.sequences_ = sequences;
  for (size_t item = 0; item < sequences.size(); ++item) {
    const auto& seq = sequences[item];
    if (seq.empty()) throw Error("invalid_index", "empty token sequence for item " + std::to_string(item));
    int node = 0;
    for (int tok : seq) {
      if (trie.nodes_[static_cast<size_t>(node)].item >= 0)
        throw Error("duplicate_index", "item sequence extends another item's leaf");
      int next = trie.child(node, tok);
      if (next < 0) {
        next = static_cast<int>(trie.nodes_.size());
        auto& ch = trie.nodes_[static_cast<size_t>(node)].children;
        ch.insert(std::lower_bound(ch.begin(), ch.end(), std::make_pair(tok, -1)), {tok, next});
        trie.nodes_.emplace_back();
      }
      node = next;
    }
    auto& leaf = trie.nodes_[static_cast<size_t>(node)];
    if (leaf.item >= 0 || !leaf.children.empty())
      throw Error("duplicate_index", "duplicate or prefix token sequence for item " + std::to_string(item));
    leaf.item = static_cast<int>(item);
    ++trie.leaves_;
    trie.max_depth_ = std::max(trie.max_depth_, static_cast<int>(seq.size()));
  }
  return trie;
}

IndexTrie IndexTrie::build(const std::vector<ItemIndex>& indices, const Vocab& vocab) {
  std::vector<std::vector<int>> seqs;
  seqs.reserve(indices.size());
  for (const auto& idx : indices) seqs.push_back(index_token_ids(idx, vocab));
  return build(seqs);
}

std::span<const std::pair<int, int>> IndexTrie::children(int node) const {
  return nodes_.at(static_cast<size_t>(node)).children;
}

int IndexTrie::child(int node, int token) const {
  const auto& ch = nodes_.at(static_cast<size_t>(node)).children;
  auto it = std::lower_bound(ch.begin(), ch.end(), std::make_pair(token, -1));
  return (it != ch.end() && it->first == token) ? it->second : -1;
}

int IndexTrie::leaf_item(int node) const { return nodes_.at(static_cast<size_t>(node)).item; }

std::optional<int> IndexTrie::lookup(std::span<const int> tokens) const {
  int node = 0;
  for (int t : tokens) {
    node = child(node, t);
    if (node < 0) return std::nullopt;
  }
  const int item = leaf_item(node);
  if (item < 0) return std::nullopt;
  return item;
}

}  // namespace genrec
