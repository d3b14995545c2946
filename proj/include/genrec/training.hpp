#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "genrec/checkpoint.hpp"
#include "genrec/corpus.hpp"
#include "genrec/embed.hpp"
#include "genrec/eval.hpp"
#include "genrec/optim.hpp"
#include "genrec/tasks.hpp"

namespace genrec {

struct TrainConfig {
  AdamWConfig optim{.lr = 2e-3};
  int micro_batch = 8;
  int accum_steps = 4;
  int epochs = 8;
  int warmup_steps = 20;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double tau = 0.07;
  bool gct = true;
  int ratio_srt = 4;
  int ratio_recon = 1;
  int ratio_pref = 1;
  // Validation: Recall@val_k over the first val_users users (0 = all).
  int val_users = 100;
  int val_k = 10;
  int val_beam = 20;
  // Annealing keeps SRT examples whose history has at least this many items.
  int high_grade_min_history = 5;
  uint64_t seed = 1;

  void validate() const;
};

// Everything the stages read besides the model. Pointers must outlive the run.
struct TrainData {
  const Splits* splits = nullptr;
  const std::map<std::string, ItemRecord>* items = nullptr;
  const EmbeddingMatrix* z_semantic = nullptr;
  const EmbeddingMatrix* z_behavioral = nullptr;
  const TaskRenderer* renderer = nullptr;
  const IndexTrie* trie = nullptr;
  const std::vector<std::string>* trie_items = nullptr;
};

// Sliding next-item pairs over each user's training sequence.
struct SrtPair {
  std::string user_id;
  std::vector<std::string> history;
  std::string target;
};
std::vector<SrtPair> srt_pairs(const Splits& splits, int min_history = 1);

// Examples of one epoch of the mixed task stream: every SRT pair once, plus
// semantic-reconstruction and preference examples in the configured ratio
// to the SRT count (rounded to nearest).
std::vector<TrainingExample> build_epoch(const TrainData& data, const TrainConfig& cfg, int epoch);

// Splits examples into task-homogeneous micro-batches in a seeded order.
std::vector<std::vector<const TrainingExample*>> make_micro_batches(const std::vector<TrainingExample>& examples,
                                                                   int micro_batch, Rng& rng);

struct MicroBatchLoss {
  double total = 0;  // summed over examples
  double gen = 0;    // summed over examples
  double con_s = 0;  // batch means, 0 when not evaluated
  double con_b = 0;
  int examples = 0;
  int srt = 0;
};

// One forward/backward pass over a micro-batch. The loss is
//   sum_i gen_i + n_srt * (lambda1 * con_s + lambda2 * con_b)
// with the contrastive terms only for SRT batches with gct on. Gradients
// add into `grads`; groups whose GradSet is empty stay frozen.
MicroBatchLoss accumulate_micro_batch(const Model<float>& model, ModelGrads<float>& grads,
                                      const std::vector<const TrainingExample*>& batch, const TrainData& data,
                                      const TrainConfig& cfg, bool use_adapter, Rng* dropout_rng);

struct TrainResult {
  int best_epoch = 0;
  double best_val_recall = 0;
  int64_t optimizer_steps = 0;
  std::vector<double> epoch_first_step_loss;  // mean per-example loss of each epoch's first step
  std::vector<double> epoch_mean_loss;
  std::vector<double> val_recall;  // per evaluated state, in order
  std::string metrics_jsonl;
};

using EpochCallback = std::function<void(const Model<float>&, const CheckpointMeta&)>;

// Trains backbone and projectors on the mixed task stream (adapter off and
// untouched) and leaves the model at its best validation epoch.
TrainResult initial_train(Model<float>& model, const TrainData& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

// Trains only the adapter on high-grade SRT examples; base and projector
// parameters are frozen and verified bitwise unchanged. The zero adapter
// competes as epoch 0, so the selected state never validates worse than
// adapter-off inference.
TrainResult annealing_tune(Model<float>& model, const TrainData& data, const TrainConfig& cfg,
                           const EpochCallback& on_epoch = {});

}  // namespace genrec
