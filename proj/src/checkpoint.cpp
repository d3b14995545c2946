#include "genrec/checkpoint.hpp"

#include <algorithm>

#include "genrec/binary_io.hpp"

namespace genrec {

namespace {

constexpr uint32_t kMagic = 0x4B435247;  // "GRCK"
constexpr uint32_t kVersion = 1;
constexpr uint32_t kHasBase = 1, kHasProjector = 2, kHasAdapter = 4;

void put_group(BinaryWriter& w, const ParameterSet<float>& ps) {
  w.put<uint32_t>(static_cast<uint32_t>(ps.size()));
  for (const auto& t : ps.tensors) {
    w.put_string(t.name);
    w.put<uint32_t>(static_cast<uint32_t>(t.value.rows()));
    w.put<uint32_t>(static_cast<uint32_t>(t.value.cols()));
    w.put_raw(t.value.data(), sizeof(float) * static_cast<size_t>(t.value.size()));
  }
}

void get_group(BinaryReader& r, ParameterSet<float>& ps, const char* group) {
  const auto n = r.get<uint32_t>();
  if (n != ps.size())
    throw Error("format_error", std::string("checkpoint group ") + group + " has an unexpected tensor count");
  for (auto& t : ps.tensors) {
    const std::string name = r.get_string();
    const auto rows = r.get<uint32_t>();
    const auto cols = r.get<uint32_t>();
    if (name != t.name || rows != t.value.rows() || cols != t.value.cols())
      throw Error("format_error", "checkpoint tensor " + name + " does not match the model layout");
    r.get_raw(t.value.data(), sizeof(float) * static_cast<size_t>(t.value.size()));
  }
}

void skip_group(BinaryReader& r) {
  const auto n = r.get<uint32_t>();
  std::vector<char> sink;
  for (uint32_t i = 0; i < n; ++i) {
    r.get_string();
    const auto rows = r.get<uint32_t>();
    const auto cols = r.get<uint32_t>();
    sink.resize(sizeof(float) * static_cast<size_t>(rows) * cols);
    r.get_raw(sink.data(), sink.size());
  }
}

}  // namespace

std::string serialize_checkpoint(const Model<float>& model, const CheckpointMeta& meta, bool with_projector,
                                 bool with_adapter) {
  BinaryWriter w;
  const auto& c = model.config();
  w.put<uint32_t>(kMagic);
  w.put<uint32_t>(kVersion);
  for (int v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.context_len, c.adapter_rank, c.proj_dim_s,
                c.proj_dim_b})
    w.put<int32_t>(v);
  w.put<double>(c.dropout);
  w.put<uint64_t>(c.seed);
  const auto& names = model.vocab().names();
  w.put<uint32_t>(static_cast<uint32_t>(names.size()));
  for (const auto& n : names) w.put_string(n);
  w.put<uint64_t>(model.vocab().hash());
  uint32_t flags = kHasBase;
  if (with_projector && model.has_projector()) flags |= kHasProjector;
  if (with_adapter && model.has_adapter()) flags |= kHasAdapter;
  w.put<uint32_t>(flags);
  w.put_string(meta.stage);
  w.put<int32_t>(meta.epoch);
  w.put<double>(meta.val_recall);
  w.put_string(meta.fingerprint);
  put_group(w, model.base);
  if (flags & kHasProjector) put_group(w, model.projector);
  if (flags & kHasAdapter) put_group(w, model.adapter);
  return w.bytes();
}

Model<float> parse_checkpoint(std::string_view bytes, bool inference, CheckpointMeta* meta) {
  BinaryReader r(bytes, "checkpoint");
  if (r.get<uint32_t>() != kMagic) throw Error("format_error", "not a checkpoint file");
  if (const auto v = r.get<uint32_t>(); v != kVersion)
    throw Error("format_error", "unsupported checkpoint version " + std::to_string(v));
  ModelConfig c;
  c.vocab_size = r.get<int32_t>();
  c.d_model = r.get<int32_t>();
  c.n_layers = r.get<int32_t>();
  c.n_heads = r.get<int32_t>();
  c.context_len = r.get<int32_t>();
  c.adapter_rank = r.get<int32_t>();
  c.proj_dim_s = r.get<int32_t>();
  c.proj_dim_b = r.get<int32_t>();
  c.dropout = r.get<double>();
  c.seed = r.get<uint64_t>();
  const auto n_names = r.get<uint32_t>();
  std::vector<std::string> names;
  names.reserve(n_names);
  for (uint32_t i = 0; i < n_names; ++i) names.push_back(r.get_string());
  Vocab vocab = Vocab::byte_level();
  if (names.size() < static_cast<size_t>(vocab.size()) ||
      !std::equal(vocab.names().begin(), vocab.names().end(), names.begin()))
    throw Error("format_error", "checkpoint vocabulary does not start with the byte-level base");
  vocab.extend(std::span<const std::string>(names).subspan(static_cast<size_t>(vocab.size())));
  if (r.get<uint64_t>() != vocab.hash()) throw Error("format_error", "checkpoint vocabulary hash mismatch");
  if (vocab.size() != c.vocab_size) throw Error("format_error", "checkpoint vocabulary size mismatch");

  const auto flags = r.get<uint32_t>();
  CheckpointMeta m;
  m.stage = r.get_string();
  m.epoch = r.get<int32_t>();
  m.val_recall = r.get<double>();
  m.fingerprint = r.get_string();
  if (meta) *meta = m;

  Model<float> model(c, vocab, Model<float>::Uninitialized{});
  get_group(r, model.base, "base");
  if (flags & kHasProjector) {
    if (inference) {
      skip_group(r);
      model.drop_projector();
    } else {
      get_group(r, model.projector, "projector");
    }
  } else {
    model.drop_projector();
  }
  if (flags & kHasAdapter) get_group(r, model.adapter, "adapter");
  else model.drop_adapter();
  if (!r.at_end()) throw Error("format_error", "trailing bytes in checkpoint");
  return model;
}

void save_checkpoint(const std::string& path, const Model<float>& model, const CheckpointMeta& meta,
                     bool with_projector, bool with_adapter) {
  write_file_atomic(path, serialize_checkpoint(model, meta, with_projector, with_adapter));
}

Model<float> load_checkpoint(const std::string& path, bool inference, CheckpointMeta* meta) {
  return parse_checkpoint(read_file(path), inference, meta);
}

std::string group_bytes(const Model<float>& model, ParamGroup group) {
  std::string out;
  for (const auto& t : model.group(group).tensors)
    out.append(reinterpret_cast<const char*>(t.value.data()), sizeof(float) * static_cast<size_t>(t.value.size()));
  return out;
}

}  // namespace genrec
