#include "genrec/embed.hpp"

#include <cmath>

#include "genrec/binary_io.hpp"
#include "genrec/common.hpp"

namespace genrec {

namespace {
constexpr uint32_t kEmbeddingMagic = 0x4D455247;  // "GREM"
constexpr uint32_t kEmbeddingVersion = 1;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

const char* to_string(EmbeddingSource s) {
  return s == EmbeddingSource::semantic ? "semantic" : "behavioral";
}

void EmbeddingMatrix::validate() const {
  if (static_cast<size_t>(vectors.rows()) != item_ids.size())
    throw Error("invalid_embeddings", "row count does not match item count");
  if (!vectors.allFinite()) throw Error("invalid_embeddings", "embedding contains NaN or Inf");
}

int EmbeddingMatrix::row_of(const std::string& item_id) const {
  if (lookup_.size() != item_ids.size()) {
    lookup_.clear();
    for (size_t i = 0; i < item_ids.size(); ++i) lookup_.emplace(item_ids[i], static_cast<int>(i));
  }
  auto it = lookup_.find(item_id);
  if (it == lookup_.end()) throw Error("unknown_item", "no embedding row for item " + item_id);
  return it->second;
}

std::string serialize_embeddings(const EmbeddingMatrix& m) {
  m.validate();
  BinaryWriter w;
  w.put<uint32_t>(kEmbeddingMagic);
  w.put<uint32_t>(kEmbeddingVersion);
  w.put<uint32_t>(static_cast<uint32_t>(m.source));
  w.put<uint32_t>(static_cast<uint32_t>(m.dim()));
  w.put<uint64_t>(m.size());
  w.put<uint64_t>(m.seed);
  w.put_string(m.fingerprint);
  w.put_raw(m.vectors.data(), sizeof(float) * static_cast<size_t>(m.vectors.size()));
  for (const auto& id : m.item_ids) w.put_string(id);
  return w.bytes();
}

EmbeddingMatrix parse_embeddings(std::string_view bytes) {
  BinaryReader r(bytes, "embedding file");
  if (r.get<uint32_t>() != kEmbeddingMagic) throw Error("format_error", "not an embedding file");
  if (r.get<uint32_t>() != kEmbeddingVersion)
    throw Error("format_error", "unsupported embedding file version");
  EmbeddingMatrix m;
  const auto source = r.get<uint32_t>();
  if (source > 1) throw Error("format_error", "unknown embedding source tag");
  m.source = static_cast<EmbeddingSource>(source);
  const auto d = r.get<uint32_t>();
  const auto n = r.get<uint64_t>();
  m.seed = r.get<uint64_t>();
  m.fingerprint = r.get_string();
  m.vectors.resize(static_cast<Eigen::Index>(n), d);
  r.get_raw(m.vectors.data(), sizeof(float) * n * d);
  m.item_ids.reserve(n);
  for (uint64_t i = 0; i < n; ++i) m.item_ids.push_back(r.get_string());
  if (!r.at_end()) throw Error("format_error", "trailing bytes in embedding file");
  m.validate();
  return m;
}

void normalize_rows(EmbeddingMatrix& m, bool normalize, float norm_cap) {
  for (Eigen::Index i = 0; i < m.vectors.rows(); ++i) {
    const double norm = m.vectors.row(i).cast<double>().norm();
    if (norm == 0.0) continue;
    if (normalize) {
      m.vectors.row(i) = (m.vectors.row(i).cast<double>() / norm).cast<float>();
    } else if (norm > norm_cap) {
      m.vectors.row(i) = (m.vectors.row(i).cast<double>() * (norm_cap / norm)).cast<float>();
    }
  }
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u == ' ' || u == '\t' || u == '\n' || u == '\r' || u == '\f' || u == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(u >= 'A' && u <= 'Z' ? static_cast<char>(u - 'A' + 'a') : c);
  }
  return out;
}

std::string item_text(const ItemRecord& item) {
  if (item.description.empty()) return item.title;
  return item.title + " | " + item.description;
}

HashedNgramEmbedder::HashedNgramEmbedder(int dim, uint64_t seed, int max_n)
    : dim_(dim), seed_hash_(mix64(seed)), max_n_(max_n) {
  if (dim < 1 || max_n < 1) throw Error("invalid_argument", "embedder dim and max_n must be positive");
}

MatD HashedNgramEmbedder::hidden_states(std::string_view text) const {
  const int n = static_cast<int>(text.size());
  MatD h = MatD::Zero(n, dim_);
  for (int t = 0; t < n; ++t) {
    for (int len = 1; len <= max_n_ && len <= t + 1; ++len) {
      const uint64_t g = fnv1a64(text.substr(static_cast<size_t>(t - len + 1), static_cast<size_t>(len)));
      for (int j = 0; j < dim_; ++j) {
        const uint64_t u = mix64(seed_hash_ ^ (g + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(j + 1)));
        h(t, j) += static_cast<double>(u >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      }
    }
    for (int j = 0; j < dim_; ++j) h(t, j) = std::tanh(h(t, j));
  }
  return h;
}

std::vector<float> semantic_embed(const ItemRecord& item, const SemanticEmbedder& embedder) {
  if (item.title.empty()) throw Error("empty_text", "item " + item.item_id + " has no title");
  const std::string text = normalize_text(item_text(item));
  if (text.empty()) throw Error("empty_text", "item " + item.item_id + " has no text after normalization");
  const MatD h = embedder.hidden_states(text);
  if (h.rows() == 0) throw Error("empty_text", "embedder produced no hidden states for " + item.item_id);
  const RowVec<double> mean = h.colwise().mean();
  std::vector<float> out(static_cast<size_t>(mean.size()));
  for (Eigen::Index j = 0; j < mean.size(); ++j) out[static_cast<size_t>(j)] = static_cast<float>(mean(j));
  return out;
}

EmbeddingMatrix embed_catalog(const std::map<std::string, ItemRecord>& items,
                              const SemanticEmbedder& embedder, uint64_t seed) {
  EmbeddingMatrix m;
  m.source = EmbeddingSource::semantic;
  m.seed = seed;
  m.vectors.resize(static_cast<Eigen::Index>(items.size()), embedder.dim());
  Eigen::Index row = 0;
  for (const auto& [id, item] : items) {
    const auto v = semantic_embed(item, embedder);
    for (int j = 0; j < embedder.dim(); ++j) m.vectors(row, j) = v[static_cast<size_t>(j)];
    m.item_ids.push_back(id);
    ++row;
  }
  normalize_rows(m);
  m.validate();
  return m;
}

BehaviorEncoder::BehaviorEncoder(std::vector<std::string> item_ids, const BehaviorConfig& cfg)
    : item_ids_(std::move(item_ids)), cfg_(cfg) {
  const auto n = static_cast<Eigen::Index>(item_ids_.size());
  if (n < 2) throw Error("too_few_items", "behavior encoder needs at least 2 items for negatives");
  Rng rng(hash_combine(cfg.seed, 0xB7));
  history_table_.resize(n, cfg.dim);
  item_table_.resize(n, cfg.dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < cfg.dim; ++j) history_table_(i, j) = 0.1 * rng.normal();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < cfg.dim; ++j) item_table_(i, j) = 0.1 * rng.normal();
  query_ = RowVec<double>::Zero(cfg.dim);
  recency_ = RowVec<double>::Zero(cfg.max_history);
  m_hist_ = v_hist_ = MatD::Zero(n, cfg.dim);
  m_item_ = v_item_ = MatD::Zero(n, cfg.dim);
  m_query_ = v_query_ = RowVec<double>::Zero(cfg.dim);
  m_rec_ = v_rec_ = RowVec<double>::Zero(cfg.max_history);
}

RowVec<double> BehaviorEncoder::pool(const std::vector<int>& history, std::vector<double>* attn) const {
  const int h = static_cast<int>(history.size());
  std::vector<double> s(static_cast<size_t>(h));
  double mx = -1e300;
  for (int i = 0; i < h; ++i) {
    const int r = std::min(h - 1 - i, cfg_.max_history - 1);
    s[static_cast<size_t>(i)] = query_.dot(history_table_.row(history[static_cast<size_t>(i)])) + recency_(r);
    mx = std::max(mx, s[static_cast<size_t>(i)]);
  }
  double z = 0;
  for (auto& v : s) z += (v = std::exp(v - mx));
  RowVec<double> u = RowVec<double>::Zero(cfg_.dim);
  for (int i = 0; i < h; ++i) {
    s[static_cast<size_t>(i)] /= z;
    u += s[static_cast<size_t>(i)] * history_table_.row(history[static_cast<size_t>(i)]);
  }
  if (attn) *attn = std::move(s);
  return u;
}

std::vector<double> BehaviorEncoder::score(const std::vector<int>& history) const {
  if (history.empty()) throw Error("empty_history", "cannot score an empty history");
  const RowVec<double> u = pool(history, nullptr);
  std::vector<double> out(item_ids_.size());
  for (size_t c = 0; c < item_ids_.size(); ++c) out[c] = u.dot(item_table_.row(static_cast<Eigen::Index>(c)));
  return out;
}

EmbeddingMatrix BehaviorEncoder::embeddings() const {
  EmbeddingMatrix m;
  m.item_ids = item_ids_;
  m.vectors = item_table_.cast<float>();
  m.source = EmbeddingSource::behavioral;
  m.seed = cfg_.seed;
  return m;
}

namespace {
template <class Row, class Grad, class MRow, class VRow>
void adam_row(Row&& p, const Grad& g, MRow&& m, VRow&& v, double lr, double c1, double c2) {
  m = kAdamBeta1 * m + (1 - kAdamBeta1) * g;
  v = kAdamBeta2 * v + (1 - kAdamBeta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
}
}  // namespace

double BehaviorEncoder::train_epoch(const std::vector<std::vector<int>>& sequences, Rng& rng) {
  // Pair order is shuffled once per epoch; each pair is one Adam step on the
  // rows it touches.
  std::vector<std::pair<int, int>> pairs;  // (sequence, position of target)
  for (size_t s = 0; s < sequences.size(); ++s)
    for (size_t t = 1; t < sequences[s].size(); ++t) pairs.emplace_back(static_cast<int>(s), static_cast<int>(t));
  rng.shuffle(pairs);

  const int n = static_cast<int>(item_ids_.size());
  const int n_cand = cfg_.negatives + 1;
  double total = 0;
  std::vector<int> cand(static_cast<size_t>(n_cand));
  std::vector<double> logits(static_cast<size_t>(n_cand));
  std::vector<double> attn;
  for (const auto& [s, t] : pairs) {
    const auto& seq = sequences[static_cast<size_t>(s)];
    const int start = std::max(0, t - cfg_.max_history);
    std::vector<int> hist(seq.begin() + start, seq.begin() + t);
    const int pos = seq[static_cast<size_t>(t)];
    cand[0] = pos;
    for (int k = 1; k < n_cand; ++k) {
      int r = static_cast<int>(rng.below(static_cast<uint64_t>(n - 1)));
      cand[static_cast<size_t>(k)] = r >= pos ? r + 1 : r;
    }

    const RowVec<double> u = pool(hist, &attn);
    double mx = -1e300;
    for (int k = 0; k < n_cand; ++k) {
      logits[static_cast<size_t>(k)] = u.dot(item_table_.row(cand[static_cast<size_t>(k)]));
      mx = std::max(mx, logits[static_cast<size_t>(k)]);
    }
    double z = 0;
    for (auto& l : logits) z += std::exp(l - mx);
    total += -(logits[0] - mx - std::log(z));

    ++step_;
    const double c1 = 1 - std::pow(kAdamBeta1, static_cast<double>(step_));
    const double c2 = 1 - std::pow(kAdamBeta2, static_cast<double>(step_));

    // dL/du and item-tower updates.
    RowVec<double> gu = RowVec<double>::Zero(cfg_.dim);
    std::vector<std::pair<int, RowVec<double>>> item_grads;
    for (int k = 0; k < n_cand; ++k) {
      const double p = std::exp(logits[static_cast<size_t>(k)] - mx) / z;
      const double dl = p - (k == 0 ? 1.0 : 0.0);
      const int c = cand[static_cast<size_t>(k)];
      gu += dl * item_table_.row(c);
      item_grads.emplace_back(c, dl * u);
    }
    // Accumulate duplicates before stepping so each row moves once.
    std::sort(item_grads.begin(), item_grads.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 0; i < item_grads.size();) {
      RowVec<double> g = item_grads[i].second;
      size_t j = i + 1;
      for (; j < item_grads.size() && item_grads[j].first == item_grads[i].first; ++j) g += item_grads[j].second;
      const int c = item_grads[i].first;
      adam_row(item_table_.row(c), g, m_item_.row(c), v_item_.row(c), cfg_.lr, c1, c2);
      i = j;
    }

    // History tower: attention pooling backward.
    const int h = static_cast<int>(hist.size());
    std::vector<double> dalpha(static_cast<size_t>(h));
    double weighted = 0;
    for (int i = 0; i < h; ++i) {
      dalpha[static_cast<size_t>(i)] = gu.dot(history_table_.row(hist[static_cast<size_t>(i)]));
      weighted += attn[static_cast<size_t>(i)] * dalpha[static_cast<size_t>(i)];
    }
    RowVec<double> gq = RowVec<double>::Zero(cfg_.dim);
    RowVec<double> grec = RowVec<double>::Zero(cfg_.max_history);
    std::vector<std::pair<int, RowVec<double>>> hist_grads;
    for (int i = 0; i < h; ++i) {
      const int item = hist[static_cast<size_t>(i)];
      const double ds = attn[static_cast<size_t>(i)] * (dalpha[static_cast<size_t>(i)] - weighted);
      gq += ds * history_table_.row(item);
      grec(std::min(h - 1 - i, cfg_.max_history - 1)) += ds;
      hist_grads.emplace_back(item, attn[static_cast<size_t>(i)] * gu + ds * query_);
    }
    std::sort(hist_grads.begin(), hist_grads.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 0; i < hist_grads.size();) {
      RowVec<double> g = hist_grads[i].second;
      size_t j = i + 1;
      for (; j < hist_grads.size() && hist_grads[j].first == hist_grads[i].first; ++j) g += hist_grads[j].second;
      const int c = hist_grads[i].first;
      adam_row(history_table_.row(c), g, m_hist_.row(c), v_hist_.row(c), cfg_.lr, c1, c2);
      i = j;
    }
    adam_row(query_, gq, m_query_, v_query_, cfg_.lr, c1, c2);
    adam_row(recency_, grec, m_rec_, v_rec_, cfg_.lr, c1, c2);
  }
  return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

EmbeddingMatrix train_behavior_encoder(const Splits& splits, const std::vector<std::string>& item_ids,
                                       const BehaviorConfig& cfg, BehaviorEncoder* trained) {
  if (splits.users.empty()) throw Error("empty_log", "behavior encoder needs a non-empty training log");
  BehaviorEncoder enc(item_ids, cfg);
  std::unordered_map<std::string, int> row;
  for (size_t i = 0; i < item_ids.size(); ++i) row.emplace(item_ids[i], static_cast<int>(i));
  std::vector<std::vector<int>> sequences;
  for (const auto& u : splits.users) {
    std::vector<int> seq;
    for (const auto& id : u.train) {
      auto it = row.find(id);
      if (it == row.end()) throw Error("unknown_item", "training item " + id + " not in registry");
      seq.push_back(it->second);
    }
    sequences.push_back(std::move(seq));
  }
  Rng rng(hash_combine(cfg.seed, 0x5EED));
  for (int e = 0; e < cfg.epochs; ++e) enc.train_epoch(sequences, rng);
  EmbeddingMatrix m = enc.embeddings();
  normalize_rows(m);
  m.validate();
  if (trained) *trained = std::move(enc);
  return m;
}

}  // namespace genrec
