#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/embed.hpp"
#include "genrec/eval.hpp"
#include "genrec/indexer.hpp"
#include "genrec/model.hpp"
#include "genrec/synth.hpp"
#include "genrec/training.hpp"

namespace genrec {

// One ablation variant: which index signals, and whether the contrastive
// task and annealing stage run.
struct AblationVariant {
  std::string name;
  IndexComposition composition = IndexComposition::unit;
  bool gct = true;
  bool aat = true;
  int depth_s = 4;
  int depth_b = 4;
};

// Parses "name:composition:gct:aat[:depth_s:depth_b]" entries separated by
// commas, e.g. "unit:unit:1:0,nogct:unit:0:0".
std::vector<AblationVariant> parse_ablation_plan(std::string_view spec, int default_depth_s, int default_depth_b);

struct PipelineConfig {
  std::string interactions;  // corpus input paths for ingest
  std::string metadata;
  uint64_t seed = 42;

  int semantic_dim = 64;
  BehaviorConfig behavior;
  IndexConfig index;
  ModelConfig model;
  TrainConfig train;
  TrainConfig anneal;
  EvalConfig eval;
  SynthConfig synth;
  std::vector<AblationVariant> ablation;
  std::vector<uint64_t> ablation_seeds;

  // Derives every component seed from `seed`.
  void apply_seed(uint64_t s);
  void validate() const;
  // Canonical INI rendering; the fingerprint hashes this text.
  std::string to_ini() const;
  std::string fingerprint() const;
};

PipelineConfig default_config();
// Sections: [paths] [general] [embed] [index] [model] [train] [anneal]
// [eval] [synth] [ablate]. Unknown sections or keys are errors; missing
// keys keep their defaults.
PipelineConfig parse_config(std::string_view ini_text);
PipelineConfig load_config(const std::string& path);

}  // namespace genrec
