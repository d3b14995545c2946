#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genrec/autograd.hpp"
#include "genrec/tensor.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int context_len = 512;
  int adapter_rank = 8;
  double dropout = 0.0;
  uint64_t seed = 1234;
  // Output widths of the two decompression projectors.
  int proj_dim_s = 64;
  int proj_dim_b = 64;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Which parameter group a tensor belongs to:
//   base       backbone weights (embeddings, blocks, output head)
//   projector  decompression projectors, training only
//   adapter    low-rank annealing adapter, toggleable at inference
enum class ParamGroup { base, projector, adapter };

template <class S>
struct ModelGrads {
  // An empty GradSet marks its group as frozen for the forward pass.
  GradSet<S> base, projector, adapter;

  GradSet<S>& group(ParamGroup g) {
    return g == ParamGroup::base ? base : g == ParamGroup::projector ? projector : adapter;
  }
};

template <class S>
class Model;

// Lazily binds model tensors to leaf nodes of one tape. Tensors of frozen
// groups enter as constants, so no gradient can reach them.
template <class S>
class ParamBinder {
 public:
  ParamBinder(ag::Tape<S>& tape, const Model<S>& model, ModelGrads<S>* grads);
  ag::Var get(ParamGroup group, int index);
  ag::Tape<S>& tape() { return tape_; }

 private:
  ag::Tape<S>& tape_;
  const Model<S>& model_;
  ModelGrads<S>* grads_;
  std::vector<ag::Var> base_, projector_, adapter_;
};

// Decoder-only pre-LN transformer over a byte-level vocabulary extended with
// index tokens. Additive low-rank adapters sit on the query, value and
// feed-forward up projections.
template <class S>
class Model {
 public:
  struct LayerRefs {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w_up, b_up, w_down, b_down;
  };
  struct AdapterRefs {
    int q_a, q_b, v_a, v_b, up_a, up_b;
  };
  struct ProjectorRefs {
    int w1, b1, w2, b2;
  };
  struct ForwardResult {
    ag::Var logits;  // T x |V|
    ag::Var hidden;  // T x d_model, final-norm hidden states
  };

  Model(const ModelConfig& cfg, Vocab vocab);

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

  ParameterSet<S> base, projector, adapter;

  bool has_projector() const { return !projector.empty(); }
  bool has_adapter() const { return !adapter.empty(); }
  void drop_projector() { projector.tensors.clear(); }
  void drop_adapter() { adapter.tensors.clear(); }
  // Re-creates the adapter (zero delta) or projectors from the model seed.
  void reset_adapter();
  void reset_projector();

  ParameterSet<S>& group(ParamGroup g) {
    return g == ParamGroup::base ? base : g == ParamGroup::projector ? projector : adapter;
  }
  const ParameterSet<S>& group(ParamGroup g) const {
    return g == ParamGroup::base ? base : g == ParamGroup::projector ? projector : adapter;
  }

  ForwardResult forward(ParamBinder<S>& binder, std::span<const int> tokens, bool use_adapter,
                        Rng* dropout_rng = nullptr) const;

  // Decompression projector `which` (0 semantic, 1 behavioural) applied to rows.
  ag::Var project(ParamBinder<S>& binder, ag::Var rows, int which) const;

  // Gradient-free convenience forward.
  void infer(std::span<const int> tokens, bool use_adapter, Mat<S>* logits, Mat<S>* hidden = nullptr) const;

  // Appends tokens: new embedding and output rows are the mean of the
  // existing rows plus seeded noise; existing rows stay bitwise intact.
  void extend_vocab(std::span<const std::string> tokens, uint64_t seed, double noise = 0.02);

  template <class T>
  Model<T> cast() const;

  const std::vector<LayerRefs>& layers() const { return layers_; }
  const std::vector<AdapterRefs>& adapter_layers() const { return adapter_layers_; }
  int tok_emb() const { return tok_emb_; }
  int pos_emb() const { return pos_emb_; }
  int lnf_g() const { return lnf_g_; }
  int lnf_b() const { return lnf_b_; }
  int out_w() const { return out_w_; }
  int out_b() const { return out_b_; }

  // For deserialisation: build an empty shell with the right layout.
  struct Uninitialized {};
  Model(const ModelConfig& cfg, Vocab vocab, Uninitialized);

 private:
  void init_base(Rng& rng);
  void index_layout();
  void check_tokens(std::span<const int> tokens) const;

  template <class T>
  friend class Model;

  ModelConfig cfg_;
  Vocab vocab_;
  std::vector<LayerRefs> layers_;
  std::vector<AdapterRefs> adapter_layers_;
  ProjectorRefs proj_[2]{};
  int tok_emb_ = -1, pos_emb_ = -1, lnf_g_ = -1, lnf_b_ = -1, out_w_ = -1, out_b_ = -1;
};

// Inference-only incremental evaluation with cached keys and values. States
// form a tree rooted at the prompt so beams can share their prefixes.
template <class S>
class IncrementalDecoder {
 public:
  IncrementalDecoder(const Model<S>& model, bool use_adapter);

  // Runs the prompt and returns the root state, whose logits predict the
  // first continuation token.
  int begin(std::span<const int> prompt);
  // Appends one token to each given state; returns the new states in order.
  std::vector<int> extend(std::span<const std::pair<int, int>> state_token);
  const RowVec<S>& logits(int state) const { return states_.at(static_cast<size_t>(state)).logits; }
  int position(int state) const { return states_.at(static_cast<size_t>(state)).pos; }

 private:
  struct State {
    int parent = -1;
    int pos = 0;  // number of tokens consumed so far
    std::vector<RowVec<S>> k, v;  // per layer, the row this state appended
    RowVec<S> logits;
  };
  const Model<S>& m_;
  bool use_adapter_;
  std::vector<Mat<S>> prompt_k_, prompt_v_;
  std::vector<State> states_;
};

}  // namespace genrec
