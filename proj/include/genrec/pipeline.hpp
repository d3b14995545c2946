#pragma once

#include <functional>
#include <string>
#include <vector>

#include "genrec/checkpoint.hpp"
#include "genrec/config.hpp"
#include "genrec/decode.hpp"
#include "genrec/eval.hpp"
#include "genrec/training.hpp"

namespace genrec {

// Artifact layout of a pipeline working directory.
struct Workdir {
  std::string root;

  std::string path(const std::string& rel) const { return root + "/" + rel; }
  std::string splits() const { return path("corpus/splits.jsonl"); }
  std::string items() const { return path("corpus/items.jsonl"); }
  std::string semantic() const { return path("embeddings/semantic.bin"); }
  std::string behavioral() const { return path("embeddings/behavioral.bin"); }
  std::string index() const { return path("index/index.jsonl"); }
  std::string vocab() const { return path("index/vocab.txt"); }
  std::string initial_ckpt() const { return path("checkpoints/initial.ckpt"); }
  std::string initial_last_ckpt() const { return path("checkpoints/initial_last.ckpt"); }
  std::string anneal_ckpt() const { return path("checkpoints/anneal.ckpt"); }
  std::string report(const std::string& name) const { return path("reports/" + name); }
};

// Exclusive lock on a workdir for the lifetime of the object.
class WorkdirLock {
 public:
  explicit WorkdirLock(const Workdir& wd);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::string path_;
};

using Progress = std::function<void(const std::string&)>;

// Writes interactions.tsv and items.jsonl into `out_dir`.
void run_synth(const PipelineConfig& cfg, const std::string& out_dir);
void run_ingest(const PipelineConfig& cfg, const Workdir& wd);
void run_embed(const PipelineConfig& cfg, const Workdir& wd);
void run_index(const PipelineConfig& cfg, const Workdir& wd);
TrainResult run_train_initial(const PipelineConfig& cfg, const Workdir& wd, const Progress& progress = {});
TrainResult run_train_anneal(const PipelineConfig& cfg, const Workdir& wd, const Progress& progress = {});

// Uses the annealed checkpoint when present, else the initial one.
std::vector<Recommendation> run_recommend(const PipelineConfig& cfg, const Workdir& wd, const std::string& user_id,
                                          int k);
MetricsReport run_evaluate(const PipelineConfig& cfg, const Workdir& wd);

// In-memory artifacts shared by ablation variants of one seed.
struct PreparedData {
  Splits splits;
  std::map<std::string, ItemRecord> items;
  EmbeddingMatrix semantic;
  EmbeddingMatrix behavioral;
};

PreparedData prepare_data(const InteractionLog& filtered, const PipelineConfig& cfg);

struct VariantOutcome {
  std::string variant;
  uint64_t seed = 0;
  MetricsReport report;
};

// Indexes, trains (initial, then annealing when enabled) and evaluates one
// variant on prepared data.
VariantOutcome run_variant(const PreparedData& data, const PipelineConfig& cfg, const AblationVariant& variant,
                           const Progress& progress = {});

// Every variant of cfg.ablation for every seed of cfg.ablation_seeds.
std::vector<VariantOutcome> ablation_run(const InteractionLog& filtered, const PipelineConfig& cfg,
                                         const Progress& progress = {});

// Tab-separated table: variant, seed, then one column per metric.
std::string ablation_table(const std::vector<VariantOutcome>& rows);
// Per-variant series over seeds as JSON for plotting.
std::string ablation_series(const std::vector<VariantOutcome>& rows, const std::string& fingerprint);

void run_ablate(const PipelineConfig& cfg, const Workdir& wd, const Progress& progress = {});

}  // namespace genrec
