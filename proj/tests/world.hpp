#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "genrec/corpus.hpp"
#include "genrec/embed.hpp"
#include "genrec/indexer.hpp"
#include "genrec/model.hpp"
#include "genrec/synth.hpp"
#include "genrec/tasks.hpp"
#include "genrec/training.hpp"

namespace testutil {

// A small synthetic catalog carried through embedding and indexing, plus
// a matching tiny model. Members reference each other; keep it in place.
struct World {
  genrec::Splits splits;
  std::map<std::string, genrec::ItemRecord> items;
  genrec::EmbeddingMatrix semantic, behavioral;
  std::vector<genrec::ItemIndex> indices;
  std::vector<std::string> trie_items;
  genrec::ModelConfig model_cfg;
  std::unique_ptr<genrec::Model<float>> model;
  std::unique_ptr<genrec::TaskRenderer> renderer;
  std::unique_ptr<genrec::IndexTrie> trie;

  genrec::TrainData data() const {
    genrec::TrainData d;
    d.splits = &splits;
    d.items = &items;
    d.z_semantic = &semantic;
    d.z_behavioral = &behavioral;
    d.renderer = renderer.get();
    d.trie = trie.get();
    d.trie_items = &trie_items;
    return d;
  }
};

inline std::unique_ptr<World> make_world(int n_items = 24, int n_users = 48, uint64_t seed = 5, int d_model = 16) {
  using namespace genrec;
  auto w = std::make_unique<World>();
  SynthConfig sc;
  sc.items = n_items;
  sc.users = n_users;
  sc.min_len = 6;
  sc.max_len = 8;
  sc.seed = seed;
  const auto corpus = synthesize(sc);
  const auto log = five_core_filter(parse_corpus(corpus.interactions, corpus.metadata));
  w->splits = leave_one_out_split(log);
  w->items = log.items;
  HashedNgramEmbedder enc(16, 17);
  w->semantic = embed_catalog(w->items, enc, 17);
  BehaviorConfig bc;
  bc.dim = 16;
  bc.epochs = 5;
  bc.seed = seed;
  w->behavioral = train_behavior_encoder(w->splits, w->semantic.item_ids, bc);
  IndexConfig ic;
  ic.k = 4;
  ic.depth_s = 2;
  ic.depth_b = 2;
  ic.n_init = 2;
  ic.seed = seed;
  w->indices = build_index(w->semantic, w->behavioral, ic);
  for (const auto& ix : w->indices) w->trie_items.push_back(ix.item_id);
  w->model_cfg.d_model = d_model;
  w->model_cfg.n_layers = 2;
  w->model_cfg.n_heads = 2;
  w->model_cfg.context_len = 160;
  w->model_cfg.adapter_rank = 2;
  w->model_cfg.proj_dim_s = 16;
  w->model_cfg.proj_dim_b = 16;
  w->model_cfg.seed = seed;
  w->model = std::make_unique<Model<float>>(w->model_cfg, Vocab::byte_level());
  w->model->extend_vocab(vocab_tokens(ic, disambig_count(w->indices)), seed);
  w->renderer = std::make_unique<TaskRenderer>(w->model->vocab(), w->indices, &w->items, w->model_cfg.context_len);
  w->trie = std::make_unique<IndexTrie>(IndexTrie::build(w->indices, w->model->vocab()));
  return w;
}

inline genrec::TrainConfig quick_train(int epochs = 1) {
  genrec::TrainConfig tc;
  tc.epochs = epochs;
  tc.micro_batch = 8;
  tc.accum_steps = 2;
  tc.warmup_steps = 1;
  tc.val_users = 10;
  tc.val_beam = 10;
  tc.optim.lr = 3e-3;
  tc.seed = 3;
  return tc;
}

}  // namespace testutil
