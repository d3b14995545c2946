#include "genrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace genrec {

void ModelConfig::validate() const {
  if (vocab_size < 1) throw Error("invalid_config", "vocab_size must be positive");
  if (d_model < 1 || n_layers < 1 || n_heads < 1) throw Error("invalid_config", "model dimensions must be positive");
  if (d_model % n_heads != 0) throw Error("invalid_config", "d_model must be divisible by n_heads");
  if (context_len < 2) throw Error("invalid_config", "context_len must be at least 2");
  if (adapter_rank < 1) throw Error("invalid_config", "adapter_rank must be positive");
  if (dropout < 0 || dropout >= 1) throw Error("invalid_config", "dropout must lie in [0, 1)");
  if (proj_dim_s < 1 || proj_dim_b < 1) throw Error("invalid_config", "projector widths must be positive");
}

// ---- ParamBinder -----------------------------------------------------------

template <class S>
ParamBinder<S>::ParamBinder(ag::Tape<S>& tape, const Model<S>& model, ModelGrads<S>* grads)
    : tape_(tape),
      model_(model),
      grads_(grads),
      base_(model.base.size()),
      projector_(model.projector.size()),
      adapter_(model.adapter.size()) {
  if (grads_) {
    auto check = [](const GradSet<S>& g, const ParameterSet<S>& p) {
      if (!g.grads.empty() && g.grads.size() != p.size())
        throw Error("shape_mismatch", "gradient set does not match parameter set");
    };
    check(grads_->base, model.base);
    check(grads_->projector, model.projector);
    check(grads_->adapter, model.adapter);
  }
}

template <class S>
ag::Var ParamBinder<S>::get(ParamGroup group, int index) {
  auto& slots = group == ParamGroup::base ? base_ : group == ParamGroup::projector ? projector_ : adapter_;
  const auto& params = model_.group(group);
  if (index < 0 || static_cast<size_t>(index) >= slots.size())
    throw Error("missing_parameter", "parameter group does not hold the requested tensor");
  ag::Var& v = slots[static_cast<size_t>(index)];
  if (v.id < 0) {
    Mat<S>* sink = nullptr;
    if (grads_) {
      auto& gs = grads_->group(group);
      if (!gs.grads.empty()) sink = &gs.grads[static_cast<size_t>(index)];
    }
    v = tape_.parameter(params.tensors[static_cast<size_t>(index)].value, sink);
  }
  return v;
}

// ---- Model -----------------------------------------------------------------

namespace {

template <class S>
void fill_normal(Mat<S>& m, Rng& rng, double std) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(std * rng.normal());
}

template <class S>
Mat<S> layer_norm_plain(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, S eps = S(1e-5)) {
  Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S mean = x.row(i).mean();
    const S var = (x.row(i).array() - mean).square().mean();
    const S r = S(1) / std::sqrt(var + eps);
    out.row(i) = ((x.row(i).array() - mean) * r).matrix().cwiseProduct(g.row(0)) + b.row(0);
  }
  return out;
}

template <class S>
void gelu_inplace(Mat<S>& x) {
  const S c = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
  const S a = S(0.044715);
  x = (S(0.5) * x.array() * (S(1) + (c * (x.array() + a * x.array().cube())).tanh())).matrix();
}

}  // namespace

template <class S>
Model<S>::Model(const ModelConfig& cfg, Vocab vocab, Uninitialized) : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.vocab_size = vocab_.size();
  cfg_.validate();
  index_layout();
}

template <class S>
Model<S>::Model(const ModelConfig& cfg, Vocab vocab) : Model(cfg, std::move(vocab), Uninitialized{}) {
  Rng rng(hash_combine(cfg_.seed, 0xBA5E));
  init_base(rng);
  reset_projector();
  reset_adapter();
}

template <class S>
void Model<S>::index_layout() {
  const int d = cfg_.d_model, V = cfg_.vocab_size, r = cfg_.adapter_rank;
  auto z = [](int rows, int cols) { return Mat<S>::Zero(rows, cols).eval(); };
  base = {};
  projector = {};
  adapter = {};
  layers_.clear();
  adapter_layers_.clear();
  tok_emb_ = base.add("tok_emb", z(V, d));
  pos_emb_ = base.add("pos_emb", z(cfg_.context_len, d));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerRefs L{};
    L.ln1_g = base.add(p + "ln1.gain", Mat<S>::Ones(1, d));
    L.ln1_b = base.add(p + "ln1.bias", z(1, d));
    L.wq = base.add(p + "attn.wq", z(d, d));
    L.bq = base.add(p + "attn.bq", z(1, d));
    L.wk = base.add(p + "attn.wk", z(d, d));
    L.bk = base.add(p + "attn.bk", z(1, d));
    L.wv = base.add(p + "attn.wv", z(d, d));
    L.bv = base.add(p + "attn.bv", z(1, d));
    L.wo = base.add(p + "attn.wo", z(d, d));
    L.bo = base.add(p + "attn.bo", z(1, d));
    L.ln2_g = base.add(p + "ln2.gain", Mat<S>::Ones(1, d));
    L.ln2_b = base.add(p + "ln2.bias", z(1, d));
    L.w_up = base.add(p + "mlp.w_up", z(d, 4 * d));
    L.b_up = base.add(p + "mlp.b_up", z(1, 4 * d));
    L.w_down = base.add(p + "mlp.w_down", z(4 * d, d));
    L.b_down = base.add(p + "mlp.b_down", z(1, d));
    layers_.push_back(L);

    AdapterRefs A{};
    A.q_a = adapter.add(p + "adapter.q_a", z(d, r));
    A.q_b = adapter.add(p + "adapter.q_b", z(r, d));
    A.v_a = adapter.add(p + "adapter.v_a", z(d, r));
    A.v_b = adapter.add(p + "adapter.v_b", z(r, d));
    A.up_a = adapter.add(p + "adapter.up_a", z(d, r));
    A.up_b = adapter.add(p + "adapter.up_b", z(r, 4 * d));
    adapter_layers_.push_back(A);
  }
  lnf_g_ = base.add("ln_f.gain", Mat<S>::Ones(1, d));
  lnf_b_ = base.add("ln_f.bias", z(1, d));
  out_w_ = base.add("out.w", z(V, d));
  out_b_ = base.add("out.b", z(1, V));

  const int widths[2] = {cfg_.proj_dim_s, cfg_.proj_dim_b};
  const char* names[2] = {"proj_s.", "proj_b."};
  for (int w = 0; w < 2; ++w) {
    proj_[w].w1 = projector.add(std::string(names[w]) + "w1", z(d, d));
    proj_[w].b1 = projector.add(std::string(names[w]) + "b1", z(1, d));
    proj_[w].w2 = projector.add(std::string(names[w]) + "w2", z(d, widths[w]));
    proj_[w].b2 = projector.add(std::string(names[w]) + "b2", z(1, widths[w]));
  }
}

template <class S>
void Model<S>::init_base(Rng& rng) {
  const double std = 0.02;
  const double resid_std = 0.02 / std::sqrt(2.0 * cfg_.n_layers);
  auto& t = base.tensors;
  fill_normal(t[static_cast<size_t>(tok_emb_)].value, rng, std);
  fill_normal(t[static_cast<size_t>(pos_emb_)].value, rng, std);
  for (const auto& L : layers_) {
    for (int w : {L.wq, L.wk, L.wv, L.w_up}) fill_normal(t[static_cast<size_t>(w)].value, rng, std);
    for (int w : {L.wo, L.w_down}) fill_normal(t[static_cast<size_t>(w)].value, rng, resid_std);
  }
  fill_normal(t[static_cast<size_t>(out_w_)].value, rng, std);
}

template <class S>
void Model<S>::reset_adapter() {
  const int d = cfg_.d_model, r = cfg_.adapter_rank;
  adapter = {};
  adapter_layers_.clear();
  Rng rng(hash_combine(cfg_.seed, 0xADA));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    AdapterRefs A{};
    Mat<S> qa(d, r), va(d, r), ua(d, r);
    fill_normal(qa, rng, 1.0 / std::sqrt(d));
    fill_normal(va, rng, 1.0 / std::sqrt(d));
    fill_normal(ua, rng, 1.0 / std::sqrt(d));
    A.q_a = adapter.add(p + "adapter.q_a", std::move(qa));
    A.q_b = adapter.add(p + "adapter.q_b", Mat<S>::Zero(r, d));
    A.v_a = adapter.add(p + "adapter.v_a", std::move(va));
    A.v_b = adapter.add(p + "adapter.v_b", Mat<S>::Zero(r, d));
    A.up_a = adapter.add(p + "adapter.up_a", std::move(ua));
    A.up_b = adapter.add(p + "adapter.up_b", Mat<S>::Zero(r, 4 * d));
    adapter_layers_.push_back(A);
  }
}

template <class S>
void Model<S>::reset_projector() {
  const int d = cfg_.d_model;
  projector = {};
  Rng rng(hash_combine(cfg_.seed, 0x9801));
  const int widths[2] = {cfg_.proj_dim_s, cfg_.proj_dim_b};
  const char* names[2] = {"proj_s.", "proj_b."};
  for (int w = 0; w < 2; ++w) {
    Mat<S> w1(d, d), w2(d, widths[w]);
    fill_normal(w1, rng, 1.0 / std::sqrt(d));
    fill_normal(w2, rng, 1.0 / std::sqrt(d));
    proj_[w].w1 = projector.add(std::string(names[w]) + "w1", std::move(w1));
    proj_[w].b1 = projector.add(std::string(names[w]) + "b1", Mat<S>::Zero(1, d));
    proj_[w].w2 = projector.add(std::string(names[w]) + "w2", std::move(w2));
    proj_[w].b2 = projector.add(std::string(names[w]) + "b2", Mat<S>::Zero(1, widths[w]));
  }
}

template <class S>
void Model<S>::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty()) throw Error("invalid_argument", "forward on an empty sequence");
  if (static_cast<int>(tokens.size()) > cfg_.context_len)
    throw Error("sequence_too_long", "sequence of " + std::to_string(tokens.size()) +
                                         " tokens exceeds context_len " + std::to_string(cfg_.context_len));
  for (int t : tokens)
    if (t < 0 || t >= cfg_.vocab_size) throw Error("unknown_token", "token id " + std::to_string(t) + " out of range");
}

template <class S>
typename Model<S>::ForwardResult Model<S>::forward(ParamBinder<S>& b, std::span<const int> tokens, bool use_adapter,
                                                   Rng* dropout_rng) const {
  using namespace ag;
  check_tokens(tokens);
  auto& t = b.tape();
  const bool adapt = use_adapter && has_adapter();
  const double p_drop = dropout_rng ? cfg_.dropout : 0.0;
  const auto B = [&](int i) { return b.get(ParamGroup::base, i); };
  const auto A = [&](int i) { return b.get(ParamGroup::adapter, i); };

  std::vector<int> positions(tokens.size());
  for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  Var x = add(t, gather_rows(t, B(tok_emb_), tokens), gather_rows<S>(t, B(pos_emb_), positions));

  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Var h = layer_norm(t, x, B(L.ln1_g), B(L.ln1_b));
    Var q = add_bias(t, matmul(t, h, B(L.wq)), B(L.bq));
    Var k = add_bias(t, matmul(t, h, B(L.wk)), B(L.bk));
    Var v = add_bias(t, matmul(t, h, B(L.wv)), B(L.bv));
    if (adapt) {
      const auto& AL = adapter_layers_[l];
      q = add(t, q, matmul(t, matmul(t, h, A(AL.q_a)), A(AL.q_b)));
      v = add(t, v, matmul(t, matmul(t, h, A(AL.v_a)), A(AL.v_b)));
    }
    Var att = causal_attention(t, q, k, v, cfg_.n_heads);
    Var o = add_bias(t, matmul(t, att, B(L.wo)), B(L.bo));
    if (p_drop > 0) o = dropout(t, o, p_drop, *dropout_rng);
    x = add(t, x, o);

    Var h2 = layer_norm(t, x, B(L.ln2_g), B(L.ln2_b));
    Var u = add_bias(t, matmul(t, h2, B(L.w_up)), B(L.b_up));
    if (adapt) {
      const auto& AL = adapter_layers_[l];
      u = add(t, u, matmul(t, matmul(t, h2, A(AL.up_a)), A(AL.up_b)));
    }
    u = gelu(t, u);
    Var dn = add_bias(t, matmul(t, u, B(L.w_down)), B(L.b_down));
    if (p_drop > 0) dn = dropout(t, dn, p_drop, *dropout_rng);
    x = add(t, x, dn);
  }
  Var hidden = layer_norm(t, x, B(lnf_g_), B(lnf_b_));
  Var logits = add_bias(t, matmul_nt(t, hidden, B(out_w_)), B(out_b_));
  return {logits, hidden};
}

template <class S>
ag::Var Model<S>::project(ParamBinder<S>& b, ag::Var rows, int which) const {
  using namespace ag;
  if (!has_projector()) throw Error("missing_parameter", "model has no decompression projectors");
  if (which < 0 || which > 1) throw Error("invalid_argument", "projector index must be 0 or 1");
  auto& t = b.tape();
  const auto& P = proj_[which];
  const auto G = [&](int i) { return b.get(ParamGroup::projector, i); };
  Var h = gelu(t, add_bias(t, matmul(t, rows, G(P.w1)), G(P.b1)));
  return add_bias(t, matmul(t, h, G(P.w2)), G(P.b2));
}

template <class S>
void Model<S>::infer(std::span<const int> tokens, bool use_adapter, Mat<S>* logits, Mat<S>* hidden) const {
  ag::Tape<S> tape;
  ParamBinder<S> binder(tape, *this, nullptr);
  auto r = forward(binder, tokens, use_adapter);
  if (logits) *logits = tape.value(r.logits);
  if (hidden) *hidden = tape.value(r.hidden);
}

template <class S>
void Model<S>::extend_vocab(std::span<const std::string> tokens, uint64_t seed, double noise) {
  if (tokens.empty()) return;
  vocab_.extend(tokens);  // throws on duplicates before anything changes
  const int old_v = cfg_.vocab_size;
  const int new_v = vocab_.size();
  Rng rng(hash_combine(seed, 0xE7E));

  auto grow_rows = [&](Mat<S>& m) {
    const RowVec<S> mean = m.colwise().mean();
    Mat<S> out(new_v, m.cols());
    out.topRows(old_v) = m;
    for (int i = old_v; i < new_v; ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = mean(j) + static_cast<S>(noise * rng.normal());
    m = std::move(out);
  };
  grow_rows(base.tensors[static_cast<size_t>(tok_emb_)].value);
  grow_rows(base.tensors[static_cast<size_t>(out_w_)].value);
  auto& ob = base.tensors[static_cast<size_t>(out_b_)].value;
  const S mean_b = ob.mean();
  Mat<S> nb(1, new_v);
  nb.leftCols(old_v) = ob;
  nb.rightCols(new_v - old_v).setConstant(mean_b);
  ob = std::move(nb);
  cfg_.vocab_size = new_v;
}

template <class S>
template <class T>
Model<T> Model<S>::cast() const {
  Model<T> out(cfg_, vocab_, typename Model<T>::Uninitialized{});
  out.base = base.template cast<T>();
  out.projector = projector.template cast<T>();
  out.adapter = adapter.template cast<T>();
  return out;
}

// ---- IncrementalDecoder ------------------------------------------------------

template <class S>
IncrementalDecoder<S>::IncrementalDecoder(const Model<S>& model, bool use_adapter)
    : m_(model), use_adapter_(use_adapter && model.has_adapter()) {}

template <class S>
int IncrementalDecoder<S>::begin(std::span<const int> prompt) {
  const auto& cfg = m_.config();
  if (prompt.empty()) throw Error("invalid_argument", "empty prompt");
  if (static_cast<int>(prompt.size()) > cfg.context_len)
    throw Error("sequence_too_long", "prompt exceeds context_len");
  const auto& P = m_.base.tensors;
  const auto W = [&](int i) -> const Mat<S>& { return P[static_cast<size_t>(i)].value; };
  const auto AW = [&](int i) -> const Mat<S>& { return m_.adapter.tensors[static_cast<size_t>(i)].value; };
  const Eigen::Index T = static_cast<Eigen::Index>(prompt.size());
  const int d = cfg.d_model, H = cfg.n_heads, dh = d / H;
  const S scl = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> x(T, d);
  for (Eigen::Index i = 0; i < T; ++i) {
    const int tok = prompt[static_cast<size_t>(i)];
    if (tok < 0 || tok >= cfg.vocab_size) throw Error("unknown_token", "prompt token out of range");
    x.row(i) = W(m_.tok_emb()).row(tok) + W(m_.pos_emb()).row(i);
  }
  prompt_k_.clear();
  prompt_v_.clear();
  states_.clear();
  for (size_t l = 0; l < m_.layers().size(); ++l) {
    const auto& L = m_.layers()[l];
    Mat<S> h = layer_norm_plain(x, W(L.ln1_g), W(L.ln1_b));
    Mat<S> q = (h * W(L.wq)).rowwise() + W(L.bq).row(0);
    Mat<S> k = (h * W(L.wk)).rowwise() + W(L.bk).row(0);
    Mat<S> v = (h * W(L.wv)).rowwise() + W(L.bv).row(0);
    if (use_adapter_) {
      const auto& A = m_.adapter_layers()[l];
      q.noalias() += (h * AW(A.q_a)) * AW(A.q_b);
      v.noalias() += (h * AW(A.v_a)) * AW(A.v_b);
    }
    Mat<S> att(T, d);
    for (int hh = 0; hh < H; ++hh) {
      Mat<S> s = q.middleCols(hh * dh, dh) * k.middleCols(hh * dh, dh).transpose();
      for (Eigen::Index i = 0; i < T; ++i) {
        auto row = s.row(i).head(i + 1);
        row *= scl;
        const S mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
        s.row(i).tail(T - i - 1).setZero();
      }
      att.middleCols(hh * dh, dh).noalias() = s * v.middleCols(hh * dh, dh);
    }
    x += (att * W(L.wo)).rowwise() + W(L.bo).row(0);
    Mat<S> h2 = layer_norm_plain(x, W(L.ln2_g), W(L.ln2_b));
    Mat<S> u = (h2 * W(L.w_up)).rowwise() + W(L.b_up).row(0);
    if (use_adapter_) {
      const auto& A = m_.adapter_layers()[l];
      u.noalias() += (h2 * AW(A.up_a)) * AW(A.up_b);
    }
    gelu_inplace(u);
    x += (u * W(L.w_down)).rowwise() + W(L.b_down).row(0);
    prompt_k_.push_back(std::move(k));
    prompt_v_.push_back(std::move(v));
  }
  Mat<S> last = x.bottomRows(1);
  Mat<S> hid = layer_norm_plain(last, W(m_.lnf_g()), W(m_.lnf_b()));
  State root;
  root.pos = static_cast<int>(T);
  root.logits = (hid * W(m_.out_w()).transpose()) + W(m_.out_b());
  states_.push_back(std::move(root));
  return 0;
}

template <class S>
std::vector<int> IncrementalDecoder<S>::extend(std::span<const std::pair<int, int>> state_token) {
  const auto& cfg = m_.config();
  if (state_token.empty()) return {};
  const auto& P = m_.base.tensors;
  const auto W = [&](int i) -> const Mat<S>& { return P[static_cast<size_t>(i)].value; };
  const auto AW = [&](int i) -> const Mat<S>& { return m_.adapter.tensors[static_cast<size_t>(i)].value; };
  const Eigen::Index B = static_cast<Eigen::Index>(state_token.size());
  const int d = cfg.d_model, H = cfg.n_heads, dh = d / H;
  const S scl = S(1) / std::sqrt(static_cast<S>(dh));

  // Ancestor chains (oldest first, root excluded) per row.
  std::vector<std::vector<int>> chains(static_cast<size_t>(B));
  Mat<S> x(B, d);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto [s, tok] = state_token[static_cast<size_t>(i)];
    if (s < 0 || static_cast<size_t>(s) >= states_.size()) throw Error("invalid_argument", "unknown decoder state");
    if (tok < 0 || tok >= cfg.vocab_size) throw Error("unknown_token", "token id out of range");
    const int pos = states_[static_cast<size_t>(s)].pos;
    if (pos >= cfg.context_len) throw Error("sequence_too_long", "decoding beyond context_len");
    x.row(i) = W(m_.tok_emb()).row(tok) + W(m_.pos_emb()).row(pos);
    for (int c = s; states_[static_cast<size_t>(c)].parent >= 0; c = states_[static_cast<size_t>(c)].parent)
      chains[static_cast<size_t>(i)].push_back(c);
    std::reverse(chains[static_cast<size_t>(i)].begin(), chains[static_cast<size_t>(i)].end());
  }

  std::vector<State> fresh(static_cast<size_t>(B));
  for (size_t l = 0; l < m_.layers().size(); ++l) {
    const auto& L = m_.layers()[l];
    Mat<S> h = layer_norm_plain(x, W(L.ln1_g), W(L.ln1_b));
    Mat<S> q = (h * W(L.wq)).rowwise() + W(L.bq).row(0);
    Mat<S> k = (h * W(L.wk)).rowwise() + W(L.bk).row(0);
    Mat<S> v = (h * W(L.wv)).rowwise() + W(L.bv).row(0);
    if (use_adapter_) {
      const auto& A = m_.adapter_layers()[l];
      q.noalias() += (h * AW(A.q_a)) * AW(A.q_b);
      v.noalias() += (h * AW(A.v_a)) * AW(A.v_b);
    }
    Mat<S> att(B, d);
    const Mat<S>& pk = prompt_k_[l];
    const Mat<S>& pv = prompt_v_[l];
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto& chain = chains[static_cast<size_t>(i)];
      const Eigen::Index n_ctx = pk.rows() + static_cast<Eigen::Index>(chain.size()) + 1;
      Mat<S> kc(n_ctx, d), vc(n_ctx, d);
      kc.topRows(pk.rows()) = pk;
      vc.topRows(pv.rows()) = pv;
      Eigen::Index r = pk.rows();
      for (int c : chain) {
        kc.row(r) = states_[static_cast<size_t>(c)].k[l];
        vc.row(r) = states_[static_cast<size_t>(c)].v[l];
        ++r;
      }
      kc.row(r) = k.row(i);
      vc.row(r) = v.row(i);
      for (int hh = 0; hh < H; ++hh) {
        RowVec<S> s = q.row(i).segment(hh * dh, dh) * kc.middleCols(hh * dh, dh).transpose();
        s *= scl;
        const S mx = s.maxCoeff();
        s = (s.array() - mx).exp().matrix();
        s /= s.sum();
        att.row(i).segment(hh * dh, dh) = s * vc.middleCols(hh * dh, dh);
      }
      fresh[static_cast<size_t>(i)].k.push_back(k.row(i));
      fresh[static_cast<size_t>(i)].v.push_back(v.row(i));
    }
    x += (att * W(L.wo)).rowwise() + W(L.bo).row(0);
    Mat<S> h2 = layer_norm_plain(x, W(L.ln2_g), W(L.ln2_b));
    Mat<S> u = (h2 * W(L.w_up)).rowwise() + W(L.b_up).row(0);
    if (use_adapter_) {
      const auto& A = m_.adapter_layers()[l];
      u.noalias() += (h2 * AW(A.up_a)) * AW(A.up_b);
    }
    gelu_inplace(u);
    x += (u * W(L.w_down)).rowwise() + W(L.b_down).row(0);
  }
  Mat<S> hid = layer_norm_plain(x, W(m_.lnf_g()), W(m_.lnf_b()));
  Mat<S> logits = (hid * W(m_.out_w()).transpose()).rowwise() + W(m_.out_b()).row(0);

  std::vector<int> ids;
  ids.reserve(static_cast<size_t>(B));
  for (Eigen::Index i = 0; i < B; ++i) {
    State& st = fresh[static_cast<size_t>(i)];
    const int parent = state_token[static_cast<size_t>(i)].first;
    st.parent = parent;
    st.pos = states_[static_cast<size_t>(parent)].pos + 1;
    st.logits = logits.row(i);
    ids.push_back(static_cast<int>(states_.size()));
    states_.push_back(std::move(st));
  }
  return ids;
}

template class ParamBinder<float>;
template class ParamBinder<double>;
template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template class IncrementalDecoder<float>;
template class IncrementalDecoder<double>;

}  // namespace genrec
