#include "genrec/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

namespace genrec {

namespace {

// Seed of the hashed text encoder. Fixed across runs so the semantic
// signal plays the role of a frozen pre-trained encoder.
constexpr uint64_t kSemanticEncoderSeed = 17;

void require(const std::string& path, const char* command) {
  if (!file_exists(path))
    throw Error("missing_artifact", path + " not found; run `genrec " + command + "` first");
}

std::string header(const char* format, const std::string& fingerprint) {
  nlohmann::ordered_json j;
  j["format"] = format;
  j["version"] = 1;
  j["fingerprint"] = fingerprint;
  return j.dump() + "\n";
}

struct IndexBundle {
  IndexConfig cfg;
  std::vector<ItemIndex> indices;
  std::vector<std::string> tokens;  // vocabulary extension
  std::vector<std::string> trie_items;
};

IndexBundle bundle_from(std::vector<ItemIndex> indices, const IndexConfig& cfg) {
  IndexBundle b;
  b.cfg = cfg;
  b.indices = std::move(indices);
  b.tokens = vocab_tokens(cfg, disambig_count(b.indices));
  for (const auto& ix : b.indices) b.trie_items.push_back(ix.item_id);
  return b;
}

IndexBundle load_index(const Workdir& wd) {
  require(wd.index(), "index");
  IndexConfig cfg;
  auto indices = parse_index(read_file(wd.index()), &cfg);
  return bundle_from(std::move(indices), cfg);
}

Model<float> fresh_model(const ModelConfig& mc, const IndexBundle& b) {
  Model<float> m(mc, Vocab::byte_level());
  m.extend_vocab(b.tokens, hash_combine(mc.seed, 0xE1));
  return m;
}

// Everything downstream of the index that training and decoding need.
struct Session {
  Session(const Model<float>& model, const IndexBundle& b, const std::map<std::string, ItemRecord>* items)
      : renderer(model.vocab(), b.indices, items, model.config().context_len),
        trie(IndexTrie::build(b.indices, model.vocab())) {}
  TaskRenderer renderer;
  IndexTrie trie;
};

TrainData train_data(const Session& s, const IndexBundle& b, const Splits& splits,
                     const std::map<std::string, ItemRecord>& items, const EmbeddingMatrix& sem,
                     const EmbeddingMatrix& beh) {
  TrainData d;
  d.splits = &splits;
  d.items = &items;
  d.z_semantic = &sem;
  d.z_behavioral = &beh;
  d.renderer = &s.renderer;
  d.trie = &s.trie;
  d.trie_items = &b.trie_items;
  return d;
}

Splits load_splits(const Workdir& wd) {
  require(wd.splits(), "ingest");
  return parse_splits(read_file(wd.splits()));
}

std::map<std::string, ItemRecord> load_items(const Workdir& wd) {
  require(wd.items(), "ingest");
  return parse_items(read_file(wd.items()));
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  require(path, "embed");
  return parse_embeddings(read_file(path));
}

void write_train_report(const Workdir& wd, const std::string& name, const TrainResult& r,
                        const std::string& fingerprint) {
  write_file_atomic(wd.report(name), header("genrec-train-log", fingerprint) + r.metrics_jsonl);
}

Progress progress_or_noop(const Progress& p) {
  return p ? p : Progress([](const std::string&) {});
}

}  // namespace

WorkdirLock::WorkdirLock(const Workdir& wd) : path_(wd.path(".lock")) {
  std::filesystem::create_directories(wd.root);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw Error("workdir_locked", "workdir " + wd.root + " is locked by another command (" + path_ + ")");
    throw Error("io_error", "cannot create " + path_ + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

WorkdirLock::~WorkdirLock() { ::unlink(path_.c_str()); }

void run_synth(const PipelineConfig& cfg, const std::string& out_dir) {
  const auto corpus = synthesize(cfg.synth);
  write_file_atomic(out_dir + "/interactions.tsv", corpus.interactions);
  write_file_atomic(out_dir + "/items.jsonl", corpus.metadata);
}

void run_ingest(const PipelineConfig& cfg, const Workdir& wd) {
  if (cfg.interactions.empty() || cfg.metadata.empty())
    throw Error("invalid_config", "ingest needs interaction and metadata paths");
  const auto log = five_core_filter(load_corpus(cfg.interactions, cfg.metadata));
  if (log.empty()) throw Error("empty_corpus", "no interactions survive the 5-core filter");
  const auto splits = leave_one_out_split(log);
  const auto fp = cfg.fingerprint();
  write_file_atomic(wd.splits(), serialize_splits(splits, fp));
  write_file_atomic(wd.items(), serialize_items(log.items, fp));
}

PreparedData prepare_data(const InteractionLog& filtered, const PipelineConfig& cfg) {
  PreparedData d;
  d.splits = leave_one_out_split(filtered);
  d.items = filtered.items;
  HashedNgramEmbedder enc(cfg.semantic_dim, kSemanticEncoderSeed);
  d.semantic = embed_catalog(d.items, enc, kSemanticEncoderSeed);
  d.behavioral = train_behavior_encoder(d.splits, d.semantic.item_ids, cfg.behavior);
  return d;
}

void run_embed(const PipelineConfig& cfg, const Workdir& wd) {
  const auto splits = load_splits(wd);
  const auto items = load_items(wd);
  const auto fp = cfg.fingerprint();
  HashedNgramEmbedder enc(cfg.semantic_dim, kSemanticEncoderSeed);
  auto sem = embed_catalog(items, enc, kSemanticEncoderSeed);
  sem.fingerprint = fp;
  auto beh = train_behavior_encoder(splits, sem.item_ids, cfg.behavior);
  beh.fingerprint = fp;
  write_file_atomic(wd.semantic(), serialize_embeddings(sem));
  write_file_atomic(wd.behavioral(), serialize_embeddings(beh));
}

void run_index(const PipelineConfig& cfg, const Workdir& wd) {
  const auto sem = load_embeddings(wd.semantic());
  const auto beh = load_embeddings(wd.behavioral());
  const auto indices = build_index(sem, beh, cfg.index);
  const auto b = bundle_from(indices, cfg.index);
  Vocab v = Vocab::byte_level();
  v.extend(b.tokens);
  write_file_atomic(wd.index(), serialize_index(indices, cfg.index, cfg.fingerprint()));
  write_file_atomic(wd.vocab(), v.serialize());
}

TrainResult run_train_initial(const PipelineConfig& cfg, const Workdir& wd, const Progress& progress) {
  const auto report = progress_or_noop(progress);
  const auto splits = load_splits(wd);
  const auto items = load_items(wd);
  const auto sem = load_embeddings(wd.semantic());
  const auto beh = load_embeddings(wd.behavioral());
  const auto b = load_index(wd);
  auto model = fresh_model(cfg.model, b);
  Session s(model, b, &items);
  const auto data = train_data(s, b, splits, items, sem, beh);
  const auto fp = cfg.fingerprint();
  auto res = initial_train(model, data, cfg.train, [&](const Model<float>& m, const CheckpointMeta& meta) {
    report("initial epoch " + std::to_string(meta.epoch) + " val_recall@" + std::to_string(cfg.train.val_k) + "=" +
           std::to_string(meta.val_recall));
    auto mm = meta;
    mm.fingerprint = fp;
    save_checkpoint(wd.initial_last_ckpt(), m, mm);
  });
  save_checkpoint(wd.initial_ckpt(), model, {"initial", res.best_epoch, res.best_val_recall, fp});
  write_train_report(wd, "train_initial.jsonl", res, fp);
  return res;
}

TrainResult run_train_anneal(const PipelineConfig& cfg, const Workdir& wd, const Progress& progress) {
  const auto report = progress_or_noop(progress);
  const auto splits = load_splits(wd);
  const auto items = load_items(wd);
  const auto sem = load_embeddings(wd.semantic());
  const auto beh = load_embeddings(wd.behavioral());
  const auto b = load_index(wd);
  require(wd.initial_ckpt(), "train-initial");
  auto model = load_checkpoint(wd.initial_ckpt());
  Session s(model, b, &items);
  const auto data = train_data(s, b, splits, items, sem, beh);
  const auto fp = cfg.fingerprint();
  auto res = annealing_tune(model, data, cfg.anneal, [&](const Model<float>&, const CheckpointMeta& meta) {
    report("anneal epoch " + std::to_string(meta.epoch) + " val_recall@" + std::to_string(cfg.anneal.val_k) + "=" +
           std::to_string(meta.val_recall));
  });
  save_checkpoint(wd.anneal_ckpt(), model, {"anneal", res.best_epoch, res.best_val_recall, fp});
  write_train_report(wd, "train_anneal.jsonl", res, fp);
  return res;
}

namespace {

Model<float> load_inference_model(const Workdir& wd, bool* annealed) {
  if (file_exists(wd.anneal_ckpt())) {
    *annealed = true;
    return load_checkpoint(wd.anneal_ckpt(), true);
  }
  require(wd.initial_ckpt(), "train-initial");
  *annealed = false;
  return load_checkpoint(wd.initial_ckpt(), true);
}

}  // namespace

std::vector<Recommendation> run_recommend(const PipelineConfig& cfg, const Workdir& wd, const std::string& user_id,
                                          int k) {
  const auto splits = load_splits(wd);
  const auto b = load_index(wd);
  bool annealed = false;
  const auto model = load_inference_model(wd, &annealed);
  Session s(model, b, nullptr);
  const UserSplit* user = nullptr;
  for (const auto& u : splits.users)
    if (u.user_id == user_id) user = &u;
  if (!user) throw Error("unknown_user", "user " + user_id + " is not in the corpus");
  std::vector<std::string> history = user->train;
  history.push_back(user->valid);
  history.push_back(user->test);
  history = truncate_history(history);
  std::set<std::string> exclude;
  if (cfg.eval.exclude_history) exclude.insert(history.begin(), history.end());
  TransformerStepModel step(model, annealed);
  return recommend(step, s.renderer.srt_prompt(history), s.trie, b.trie_items, k, std::max(k, cfg.eval.beam),
                   exclude);
}

MetricsReport run_evaluate(const PipelineConfig& cfg, const Workdir& wd) {
  const auto splits = load_splits(wd);
  const auto b = load_index(wd);
  bool annealed = false;
  const auto model = load_inference_model(wd, &annealed);
  Session s(model, b, nullptr);
  EvalConfig ec = cfg.eval;
  ec.test_mode = true;
  ec.use_adapter = annealed;
  auto rep = evaluate(model, splits, s.renderer, s.trie, b.trie_items, ec);
  rep.fingerprint = cfg.fingerprint();
  write_file_atomic(wd.report("metrics.jsonl"), header("genrec-metrics", rep.fingerprint) + rep.to_jsonl());
  return rep;
}

VariantOutcome run_variant(const PreparedData& data, const PipelineConfig& cfg, const AblationVariant& variant,
                           const Progress& progress) {
  const auto report = progress_or_noop(progress);
  IndexConfig ic = cfg.index;
  ic.composition = variant.composition;
  ic.depth_s = variant.depth_s;
  ic.depth_b = variant.depth_b;
  const auto b = bundle_from(build_index(data.semantic, data.behavioral, ic), ic);
  auto model = fresh_model(cfg.model, b);
  Session s(model, b, &data.items);
  const auto td = train_data(s, b, data.splits, data.items, data.semantic, data.behavioral);
  TrainConfig tc = cfg.train;
  tc.gct = variant.gct;
  initial_train(model, td, tc);
  if (variant.aat) annealing_tune(model, td, cfg.anneal);
  EvalConfig ec = cfg.eval;
  ec.test_mode = true;
  ec.use_adapter = variant.aat;
  VariantOutcome out;
  out.variant = variant.name;
  out.seed = cfg.seed;
  out.report = evaluate(model, data.splits, s.renderer, s.trie, b.trie_items, ec);
  out.report.fingerprint = cfg.fingerprint();
  std::string line = "variant " + variant.name + " seed " + std::to_string(cfg.seed);
  for (size_t i = 0; i < ec.ks.size(); ++i)
    line += " recall@" + std::to_string(ec.ks[i]) + "=" + std::to_string(out.report.recall[i]) + " ndcg@" +
            std::to_string(ec.ks[i]) + "=" + std::to_string(out.report.ndcg[i]);
  report(line);
  return out;
}

std::vector<VariantOutcome> ablation_run(const InteractionLog& filtered, const PipelineConfig& cfg,
                                         const Progress& progress) {
  if (cfg.ablation.empty()) throw Error("invalid_config", "ablation plan is empty");
  if (cfg.ablation_seeds.empty()) throw Error("invalid_config", "ablation needs at least one seed");
  std::vector<VariantOutcome> rows;
  for (uint64_t seed : cfg.ablation_seeds) {
    PipelineConfig c = cfg;
    c.apply_seed(seed);
    const auto data = prepare_data(filtered, c);
    for (const auto& v : cfg.ablation) rows.push_back(run_variant(data, c, v, progress));
  }
  return rows;
}

std::string ablation_table(const std::vector<VariantOutcome>& rows) {
  std::string out = "variant\tseed";
  if (rows.empty()) return out + "\n";
  for (int k : rows.front().report.ks) out += "\trecall@" + std::to_string(k) + "\tndcg@" + std::to_string(k);
  out += "\n";
  for (const auto& r : rows) {
    out += r.variant + "\t" + std::to_string(r.seed);
    for (size_t i = 0; i < r.report.ks.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f", r.report.recall[i], r.report.ndcg[i]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string ablation_series(const std::vector<VariantOutcome>& rows, const std::string& fingerprint) {
  nlohmann::ordered_json j;
  j["format"] = "genrec-ablation-series";
  j["version"] = 1;
  j["fingerprint"] = fingerprint;
  j["series"] = nlohmann::ordered_json::object();
  for (const auto& r : rows) {
    auto& v = j["series"][r.variant];
    v["seeds"].push_back(r.seed);
    for (size_t i = 0; i < r.report.ks.size(); ++i) {
      v["recall@" + std::to_string(r.report.ks[i])].push_back(r.report.recall[i]);
      v["ndcg@" + std::to_string(r.report.ks[i])].push_back(r.report.ndcg[i]);
    }
  }
  return j.dump(2) + "\n";
}

void run_ablate(const PipelineConfig& cfg, const Workdir& wd, const Progress& progress) {
  const auto splits = load_splits(wd);
  const auto items = load_items(wd);
  // Rebuild the filtered log from the stored splits so every seed sees the
  // same corpus the other stages used.
  InteractionLog log;
  log.items = items;
  for (const auto& u : splits.users) {
    int64_t t = 0;
    for (const auto& i : u.train) log.events.push_back({u.user_id, i, t++});
    log.events.push_back({u.user_id, u.valid, t++});
    log.events.push_back({u.user_id, u.test, t++});
  }
  const auto rows = ablation_run(log, cfg, progress);
  const auto fp = cfg.fingerprint();
  write_file_atomic(wd.report("ablation.tsv"), "# genrec-ablation v1 fingerprint=" + fp + "\n" + ablation_table(rows));
  write_file_atomic(wd.report("ablation_series.json"), ablation_series(rows, fp));
}

}  // namespace genrec
