#include "genrec/training.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "genrec/losses.hpp"

namespace genrec {

void TrainConfig::validate() const {
  if (micro_batch < 1 || accum_steps < 1) throw Error("invalid_config", "micro_batch and accum_steps must be positive");
  if (epochs < 0) throw Error("invalid_config", "epochs must be non-negative");
  if (warmup_steps < 0) throw Error("invalid_config", "warmup_steps must be non-negative");
  if (lambda1 < 0 || lambda2 < 0) throw Error("invalid_config", "contrastive weights must be non-negative");
  if (!(tau > 0)) throw Error("invalid_config", "tau must be positive");
  if (ratio_srt < 1 || ratio_recon < 0 || ratio_pref < 0) throw Error("invalid_config", "invalid task ratios");
  if (val_k < 1 || val_beam < val_k) throw Error("invalid_config", "validation needs 1 <= val_k <= val_beam");
  if (high_grade_min_history < 1) throw Error("invalid_config", "high_grade_min_history must be positive");
}

std::vector<SrtPair> srt_pairs(const Splits& splits, int min_history) {
  std::vector<SrtPair> out;
  for (const auto& u : splits.users)
    for (size_t j = static_cast<size_t>(std::max(1, min_history)); j < u.train.size(); ++j)
      out.push_back({u.user_id, {u.train.begin(), u.train.begin() + static_cast<std::ptrdiff_t>(j)}, u.train[j]});
  return out;
}

namespace {

void check_data(const TrainData& d) {
  if (!d.splits || !d.renderer || !d.trie || !d.trie_items)
    throw Error("invalid_argument", "training data is incomplete");
}

}  // namespace

std::vector<TrainingExample> build_epoch(const TrainData& data, const TrainConfig& cfg, int epoch) {
  check_data(data);
  const auto& r = *data.renderer;
  Rng rng(hash_combine(cfg.seed, 0xE90C0000ULL + static_cast<uint64_t>(epoch)));
  std::vector<TrainingExample> out;
  const auto pairs = srt_pairs(*data.splits);
  for (const auto& p : pairs) out.push_back(r.srt(p.history, p.target, template_for(p.user_id, epoch)));
  const double n_srt = static_cast<double>(pairs.size());
  const auto n_recon = static_cast<size_t>(std::llround(n_srt * cfg.ratio_recon / cfg.ratio_srt));
  const auto n_pref = static_cast<size_t>(std::llround(n_srt * cfg.ratio_pref / cfg.ratio_srt));

  if (n_recon > 0) {
    if (!data.items) throw Error("invalid_argument", "semantic reconstruction needs item metadata");
    std::vector<std::string> ids = *data.trie_items;
    rng.shuffle(ids);
    for (size_t i = 0; i < n_recon; ++i) {
      const auto& id = ids[i % ids.size()];
      const auto dir = (fnv1a64(id) + static_cast<uint64_t>(epoch) + i / ids.size()) % 2 == 0
                           ? ReconDirection::index_to_text
                           : ReconDirection::text_to_index;
      out.push_back(r.semantic_reconstruction(id, dir, template_for(id, epoch)));
    }
  }
  if (n_pref > 0) {
    std::vector<const UserSplit*> users;
    for (const auto& u : data.splits->users)
      if (!u.train.empty()) users.push_back(&u);
    if (users.empty()) throw Error("invalid_argument", "no user has training history");
    rng.shuffle(users);
    for (size_t i = 0; i < n_pref; ++i) {
      const auto* u = users[i % users.size()];
      const size_t len = 1 + static_cast<size_t>(rng.below(u->train.size()));
      std::vector<std::string> hist(u->train.begin(), u->train.begin() + static_cast<std::ptrdiff_t>(len));
      out.push_back(r.preference(hist, template_for(u->user_id, epoch)));
    }
  }
  return out;
}

std::vector<std::vector<const TrainingExample*>> make_micro_batches(const std::vector<TrainingExample>& examples,
                                                                   int micro_batch, Rng& rng) {
  if (micro_batch < 1) throw Error("invalid_argument", "micro_batch must be positive");
  std::vector<std::vector<const TrainingExample*>> by_task(3);
  for (const auto& ex : examples) by_task[static_cast<size_t>(ex.task)].push_back(&ex);
  std::vector<std::vector<const TrainingExample*>> batches;
  for (auto& group : by_task) {
    rng.shuffle(group);
    for (size_t i = 0; i < group.size(); i += static_cast<size_t>(micro_batch)) {
      const size_t end = std::min(group.size(), i + static_cast<size_t>(micro_batch));
      batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(i), group.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  rng.shuffle(batches);
  return batches;
}

MicroBatchLoss accumulate_micro_batch(const Model<float>& model, ModelGrads<float>& grads,
                                      const std::vector<const TrainingExample*>& batch, const TrainData& data,
                                      const TrainConfig& cfg, bool use_adapter, Rng* dropout_rng) {
  MicroBatchLoss out;
  if (batch.empty()) return out;
  ag::Tape<float> tape;
  ParamBinder<float> binder(tape, model, &grads);
  std::vector<ag::Var> parts;
  std::vector<float> coeffs;
  std::vector<ag::Var> con_rows;
  std::vector<std::string> con_targets;
  for (const auto* ex : batch) {
    auto fwd = model.forward(binder, ex->tokens, use_adapter, dropout_rng);
    const auto targets = ex->next_token_targets();
    ag::Var gen = generation_loss(tape, fwd.logits, targets);
    out.gen += static_cast<double>(tape.value(gen)(0, 0));
    parts.push_back(gen);
    coeffs.push_back(1.0f);
    if (ex->task == TaskKind::srt) {
      ++out.srt;
      if (ex->con_position >= 0 && ex->target_item) {
        con_rows.push_back(ag::select_row(tape, fwd.hidden, ex->con_position));
        con_targets.push_back(*ex->target_item);
      }
    }
    ++out.examples;
  }
  const bool use_gct = cfg.gct && !con_rows.empty() && !grads.projector.grads.empty() &&
                       (cfg.lambda1 > 0 || cfg.lambda2 > 0);
  if (use_gct) {
    if (!data.z_semantic || !data.z_behavioral) throw Error("invalid_argument", "contrastive task needs embeddings");
    const auto gb = build_gct_batch(con_targets, *data.z_semantic, *data.z_behavioral);
    ag::Var h = ag::concat_rows<float>(tape, con_rows);
    const auto tau = static_cast<float>(cfg.tau);
    ag::Var ls = contrastive_loss(tape, model.project(binder, h, 0), gb.z_semantic, gb.excluded, tau);
    ag::Var lb = contrastive_loss(tape, model.project(binder, h, 1), gb.z_behavioral, gb.excluded, tau);
    out.con_s = static_cast<double>(tape.value(ls)(0, 0));
    out.con_b = static_cast<double>(tape.value(lb)(0, 0));
    const auto n = static_cast<float>(con_rows.size());
    parts.push_back(ls);
    coeffs.push_back(n * static_cast<float>(cfg.lambda1));
    parts.push_back(lb);
    coeffs.push_back(n * static_cast<float>(cfg.lambda2));
  }
  ag::Var total = ag::linear_combination<float>(tape, parts, coeffs);
  out.total = static_cast<double>(tape.value(total)(0, 0));
  if (!std::isfinite(out.total)) throw Error("diverged", "non-finite training loss");
  tape.backward(total);
  return out;
}

namespace {

struct Snapshot {
  ParameterSet<float> base, projector, adapter;
  void take(const Model<float>& m) {
    base = m.base;
    projector = m.projector;
    adapter = m.adapter;
  }
  void restore(Model<float>& m) const {
    m.base = base;
    m.projector = projector;
    m.adapter = adapter;
  }
};

double validate_recall(const Model<float>& model, const TrainData& data, const TrainConfig& cfg, bool use_adapter) {
  EvalConfig ec;
  ec.ks = {cfg.val_k};
  ec.beam = cfg.val_beam;
  ec.test_mode = false;
  ec.max_users = cfg.val_users;
  ec.use_adapter = use_adapter;
  return evaluate(model, *data.splits, *data.renderer, *data.trie, *data.trie_items, ec).recall[0];
}

struct StageSpec {
  const char* name;
  bool use_adapter;
  bool train_base;
  bool train_projector;
  bool train_adapter;
  bool zero_state_candidate;
};

uint64_t params_hash(const ParameterSet<float>& ps) {
  uint64_t h = 0x5EED;
  for (const auto& t : ps.tensors)
    h = hash_combine(h, fnv1a64(std::string_view(reinterpret_cast<const char*>(t.value.data()),
                                                 sizeof(float) * static_cast<size_t>(t.value.size()))));
  return h;
}

TrainResult run_stage(Model<float>& model, const TrainData& data, const TrainConfig& cfg, const StageSpec& spec,
                      const std::function<std::vector<TrainingExample>(int)>& make_epoch,
                      const EpochCallback& on_epoch) {
  cfg.validate();
  check_data(data);
  TrainResult res;
  const uint64_t base_hash = params_hash(model.base);
  const uint64_t proj_hash = params_hash(model.projector);

  ModelGrads<float> grads;
  if (spec.train_base) grads.base.reset(model.base);
  if (spec.train_projector && model.has_projector()) grads.projector.reset(model.projector);
  if (spec.train_adapter) grads.adapter.reset(model.adapter);
  std::optional<AdamW<float>> opt_base, opt_proj, opt_adapter;
  if (spec.train_base) opt_base.emplace(model.base, cfg.optim);
  if (!grads.projector.grads.empty()) opt_proj.emplace(model.projector, cfg.optim);
  if (spec.train_adapter) opt_adapter.emplace(model.adapter, cfg.optim);

  auto log = [&](nlohmann::ordered_json j) { res.metrics_jsonl += j.dump() + "\n"; };
  Snapshot best;
  best.take(model);
  res.best_val_recall = -1;
  auto consider = [&](int epoch) {
    const double r = validate_recall(model, data, cfg, spec.use_adapter);
    res.val_recall.push_back(r);
    log({{"stage", spec.name}, {"epoch", epoch}, {"event", "validation"}, {"recall@" + std::to_string(cfg.val_k), r}});
    if (r > res.best_val_recall) {
      res.best_val_recall = r;
      res.best_epoch = epoch;
      best.take(model);
    }
    if (on_epoch) on_epoch(model, {spec.name, epoch, r, ""});
  };
  if (spec.zero_state_candidate) consider(0);

  Rng rng(hash_combine(cfg.seed, 0x7A11));
  Rng drop_rng(hash_combine(cfg.seed, 0xD80));
  int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto examples = make_epoch(epoch);
    if (examples.empty()) throw Error("empty_stream", std::string(spec.name) + " stage has no training examples");
    const auto batches = make_micro_batches(examples, cfg.micro_batch, rng);
    double epoch_loss = 0;
    int epoch_examples = 0;
    bool first_step = true;
    double step_loss = 0;
    int step_examples = 0;
    int in_step = 0;

    auto apply_step = [&] {
      if (step_examples == 0) return;
      const float scale = 1.0f / static_cast<float>(step_examples);
      const double lr = cfg.optim.lr * std::min(1.0, static_cast<double>(step + 1) / std::max(1, cfg.warmup_steps));
      try {
        if (opt_base) opt_base->step(model.base, grads.base, scale, lr);
        if (opt_proj) opt_proj->step(model.projector, grads.projector, scale, lr);
        if (opt_adapter) opt_adapter->step(model.adapter, grads.adapter, scale, lr);
      } catch (const Error& e) {
        best.restore(model);
        throw Error("diverged", std::string("training diverged: ") + e.what());
      }
      grads.base.zero();
      grads.projector.zero();
      grads.adapter.zero();
      ++step;
      const double mean = step_loss / step_examples;
      if (first_step) {
        res.epoch_first_step_loss.push_back(mean);
        first_step = false;
      }
      log({{"stage", spec.name}, {"epoch", epoch}, {"step", step}, {"loss", mean}, {"lr", lr},
           {"examples", step_examples}});
      step_loss = 0;
      step_examples = 0;
      in_step = 0;
    };

    for (const auto& b : batches) {
      MicroBatchLoss l;
      try {
        l = accumulate_micro_batch(model, grads, b, data, cfg, spec.use_adapter,
                                   model.config().dropout > 0 ? &drop_rng : nullptr);
      } catch (const Error& e) {
        if (e.code() != "diverged") throw;
        best.restore(model);
        throw;
      }
      step_loss += l.total;
      step_examples += l.examples;
      epoch_loss += l.total;
      epoch_examples += l.examples;
      if (++in_step == cfg.accum_steps) apply_step();
    }
    apply_step();  // partial accumulation at the end of the epoch
    res.epoch_mean_loss.push_back(epoch_loss / std::max(1, epoch_examples));

    if (!spec.train_base && params_hash(model.base) != base_hash)
      throw Error("frozen_parameter_changed", "base parameters changed while frozen");
    if (!spec.train_projector && params_hash(model.projector) != proj_hash)
      throw Error("frozen_parameter_changed", "projector parameters changed while frozen");
    consider(epoch);
  }
  res.optimizer_steps = step;
  best.restore(model);
  if (res.best_val_recall < 0) res.best_val_recall = 0;
  return res;
}

}  // namespace

TrainResult initial_train(Model<float>& model, const TrainData& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  if (cfg.gct && !model.has_projector()) model.reset_projector();
  const StageSpec spec{"initial", false, true, cfg.gct, false, false};
  return run_stage(model, data, cfg, spec, [&](int e) { return build_epoch(data, cfg, e); }, on_epoch);
}

TrainResult annealing_tune(Model<float>& model, const TrainData& data, const TrainConfig& cfg,
                           const EpochCallback& on_epoch) {
  check_data(data);
  model.reset_adapter();
  const auto pairs = srt_pairs(*data.splits, cfg.high_grade_min_history);
  std::vector<SrtPair> high_grade;
  for (const auto& p : pairs)
    if (data.renderer->has_item(p.target)) high_grade.push_back(p);
  const StageSpec spec{"anneal", true, false, false, true, true};
  return run_stage(
      model, data, cfg, spec,
      [&](int e) {
        std::vector<TrainingExample> out;
        for (const auto& p : high_grade)
          out.push_back(data.renderer->srt(p.history, p.target, template_for(p.user_id, e)));
        return out;
      },
      on_epoch);
}

}  // namespace genrec
