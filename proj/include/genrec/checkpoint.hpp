#pragma once

#include <string>

#include "genrec/model.hpp"

namespace genrec {

struct CheckpointMeta {
  std::string stage;        // "initial" or "anneal"
  int epoch = 0;
  double val_recall = 0.0;  // validation Recall@K of the saved state
  std::string fingerprint;  // config fingerprint of the producing run
};

// Binary layout: magic, version, model config, vocabulary names and hash,
// a bit set of the parameter groups present (1 base, 2 projector,
// 4 adapter), metadata, then every present tensor as name, shape and
// little-endian float32 values.
std::string serialize_checkpoint(const Model<float>& model, const CheckpointMeta& meta,
                                 bool with_projector = true, bool with_adapter = true);

// With `inference` set the projector group is never materialised.
Model<float> parse_checkpoint(std::string_view bytes, bool inference = false, CheckpointMeta* meta = nullptr);

void save_checkpoint(const std::string& path, const Model<float>& model, const CheckpointMeta& meta,
                     bool with_projector = true, bool with_adapter = true);
Model<float> load_checkpoint(const std::string& path, bool inference = false, CheckpointMeta* meta = nullptr);

// Raw float32 bytes of one parameter group in tensor order.
std::string group_bytes(const Model<float>& model, ParamGroup group);

}  // namespace genrec
