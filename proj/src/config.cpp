#include "genrec/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace genrec {

namespace {

struct Binding {
  std::string section, key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& v, const std::string& where) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw Error("invalid_config", where + ": cannot parse '" + v + "'");
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double d) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw Error("invalid_config", where + ": expected a boolean, got '" + v + "'");
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_u64(const std::vector<uint64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string plan_to_string(const std::vector<AblationVariant>& plan) {
  std::string s;
  for (size_t i = 0; i < plan.size(); ++i) {
    const auto& v = plan[i];
    s += (i ? "," : "") + v.name + ":" + to_string(v.composition) + ":" + (v.gct ? "1" : "0") + ":" +
         (v.aat ? "1" : "0") + ":" + std::to_string(v.depth_s) + ":" + std::to_string(v.depth_b);
  }
  return s;
}

std::vector<Binding> bindings(PipelineConfig& c) {
  std::vector<Binding> b;
  auto add_int = [&](const char* s, const char* k, int& ref) {
    const std::string where = std::string(s) + "." + k;
    b.push_back({s, k, [&ref] { return std::to_string(ref); },
                 [&ref, where](const std::string& v) { ref = parse_number<int>(v, where); }});
  };
  auto add_u64 = [&](const char* s, const char* k, uint64_t& ref) {
    const std::string where = std::string(s) + "." + k;
    b.push_back({s, k, [&ref] { return std::to_string(ref); },
                 [&ref, where](const std::string& v) { ref = parse_number<uint64_t>(v, where); }});
  };
  auto add_double = [&](const char* s, const char* k, double& ref) {
    const std::string where = std::string(s) + "." + k;
    b.push_back({s, k, [&ref] { return fmt_double(ref); },
                 [&ref, where](const std::string& v) { ref = parse_number<double>(v, where); }});
  };
  auto add_bool = [&](const char* s, const char* k, bool& ref) {
    const std::string where = std::string(s) + "." + k;
    b.push_back({s, k, [&ref] { return std::string(ref ? "true" : "false"); },
                 [&ref, where](const std::string& v) { ref = parse_bool(v, where); }});
  };
  auto add_string = [&](const char* s, const char* k, std::string& ref) {
    b.push_back({s, k, [&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }});
  };
  auto add_train = [&](const char* s, TrainConfig& t) {
    add_double(s, "lr", t.optim.lr);
    add_double(s, "weight_decay", t.optim.weight_decay);
    add_double(s, "clip_norm", t.optim.clip_norm);
    add_int(s, "micro_batch", t.micro_batch);
    add_int(s, "accum_steps", t.accum_steps);
    add_int(s, "epochs", t.epochs);
    add_int(s, "warmup_steps", t.warmup_steps);
    add_double(s, "lambda1", t.lambda1);
    add_double(s, "lambda2", t.lambda2);
    add_double(s, "tau", t.tau);
    add_bool(s, "gct", t.gct);
    add_int(s, "ratio_srt", t.ratio_srt);
    add_int(s, "ratio_recon", t.ratio_recon);
    add_int(s, "ratio_pref", t.ratio_pref);
    add_int(s, "val_users", t.val_users);
    add_int(s, "val_k", t.val_k);
    add_int(s, "val_beam", t.val_beam);
    add_int(s, "high_grade_min_history", t.high_grade_min_history);
  };

  add_string("paths", "interactions", c.interactions);
  add_string("paths", "metadata", c.metadata);
  add_u64("general", "seed", c.seed);

  add_int("embed", "semantic_dim", c.semantic_dim);
  add_int("embed", "behavior_dim", c.behavior.dim);
  add_int("embed", "behavior_epochs", c.behavior.epochs);
  add_int("embed", "behavior_negatives", c.behavior.negatives);
  add_double("embed", "behavior_lr", c.behavior.lr);

  add_int("index", "k", c.index.k);
  add_int("index", "depth_s", c.index.depth_s);
  add_int("index", "depth_b", c.index.depth_b);
  add_int("index", "max_kmeans_iters", c.index.max_kmeans_iters);
  add_int("index", "n_init", c.index.n_init);
  b.push_back({"index", "composition", [&c] { return std::string(to_string(c.index.composition)); },
               [&c](const std::string& v) { c.index.composition = parse_composition(v); }});

  add_int("model", "d_model", c.model.d_model);
  add_int("model", "n_layers", c.model.n_layers);
  add_int("model", "n_heads", c.model.n_heads);
  add_int("model", "context_len", c.model.context_len);
  add_int("model", "adapter_rank", c.model.adapter_rank);
  add_double("model", "dropout", c.model.dropout);
  add_int("model", "proj_dim_s", c.model.proj_dim_s);
  add_int("model", "proj_dim_b", c.model.proj_dim_b);

  add_train("train", c.train);
  add_train("anneal", c.anneal);

  b.push_back({"eval", "ks", [&c] { return join_ints(c.eval.ks); },
               [&c](const std::string& v) {
                 c.eval.ks.clear();
                 for (const auto& f : split(v, ',')) c.eval.ks.push_back(parse_number<int>(trim(f), "eval.ks"));
               }});
  add_int("eval", "beam", c.eval.beam);
  add_bool("eval", "exclude_history", c.eval.exclude_history);
  add_int("eval", "max_users", c.eval.max_users);

  add_string("synth", "pattern", c.synth.pattern);
  add_int("synth", "items", c.synth.items);
  add_int("synth", "users", c.synth.users);
  add_int("synth", "min_len", c.synth.min_len);
  add_int("synth", "max_len", c.synth.max_len);
  add_int("synth", "clusters", c.synth.clusters);
  add_int("synth", "blocks", c.synth.blocks);
  add_int("synth", "items_per_cell", c.synth.items_per_cell);

  b.push_back({"ablate", "variants", [&c] { return plan_to_string(c.ablation); },
               [&c](const std::string& v) { c.ablation = parse_ablation_plan(v, c.index.depth_s, c.index.depth_b); }});
  b.push_back({"ablate", "seeds", [&c] { return join_u64(c.ablation_seeds); },
               [&c](const std::string& v) {
                 c.ablation_seeds.clear();
                 for (const auto& f : split(v, ','))
                   c.ablation_seeds.push_back(parse_number<uint64_t>(trim(f), "ablate.seeds"));
               }});
  return b;
}

}  // namespace

std::vector<AblationVariant> parse_ablation_plan(std::string_view spec, int default_depth_s, int default_depth_b) {
  std::vector<AblationVariant> out;
  for (const auto& entry : split(spec, ',')) {
    const auto e = trim(entry);
    if (e.empty()) continue;
    const auto f = split(e, ':');
    if (f.size() != 4 && f.size() != 6)
      throw Error("invalid_config", "ablation variant '" + e + "' needs name:composition:gct:aat[:depth_s:depth_b]");
    AblationVariant v;
    v.name = f[0];
    v.composition = parse_composition(f[1]);
    v.gct = parse_bool(f[2], "ablation gct flag");
    v.aat = parse_bool(f[3], "ablation aat flag");
    v.depth_s = f.size() == 6 ? parse_number<int>(f[4], "ablation depth_s") : default_depth_s;
    v.depth_b = f.size() == 6 ? parse_number<int>(f[5], "ablation depth_b") : default_depth_b;
    out.push_back(v);
  }
  return out;
}

void PipelineConfig::apply_seed(uint64_t s) {
  seed = s;
  index.seed = s;
  behavior.seed = hash_combine(s, 1);
  model.seed = hash_combine(s, 2);
  train.seed = hash_combine(s, 3);
  anneal.seed = hash_combine(s, 4);
  synth.seed = s;
}

void PipelineConfig::validate() const {
  if (semantic_dim < 1) throw Error("invalid_config", "embed.semantic_dim must be positive");
  if (behavior.dim < 1 || behavior.epochs < 0 || behavior.negatives < 1)
    throw Error("invalid_config", "invalid behaviour encoder settings");
  index.validate();
  ModelConfig m = model;
  m.vocab_size = 1;
  m.validate();
  train.validate();
  anneal.validate();
  if (eval.ks.empty() || eval.beam < 1) throw Error("invalid_config", "eval needs cut-offs and a positive beam");
  for (int k : eval.ks)
    if (k < 1 || k > eval.beam) throw Error("invalid_config", "eval cut-offs must lie in [1, beam]");
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.anneal.epochs = 4;
  c.ablation = parse_ablation_plan(
      "random:random:1:0,semantic:semantic:1:0,behavior:behavior:1:0,unit:unit:1:0,unit_nogct:unit:0:0", 4, 4);
  c.ablation_seeds = {1, 2, 3};
  c.apply_seed(c.seed);
  return c;
}

std::string PipelineConfig::to_ini() const {
  auto copy = *this;
  std::string out, section;
  for (const auto& b : bindings(copy)) {
    if (b.section != section) {
      out += (out.empty() ? "[" : "\n[") + b.section + "]\n";
      section = b.section;
    }
    out += b.key + " = " + b.get() + "\n";
  }
  return out;
}

std::string PipelineConfig::fingerprint() const { return to_hex(fnv1a64(to_ini())); }

PipelineConfig parse_config(std::string_view ini_text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("invalid_config", std::string("config: ") + e.what());
  }
  PipelineConfig c = default_config();
  auto binds = bindings(c);
  std::map<std::pair<std::string, std::string>, Binding*> lookup;
  for (auto& b : binds) lookup[{b.section, b.key}] = &b;

  // The seed decides derived seeds, so apply it before anything else.
  if (auto s = tree.get_optional<std::string>("general.seed"))
    c.apply_seed(parse_number<uint64_t>(trim(*s), "general.seed"));
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error("invalid_config", "config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      auto it = lookup.find({section, key});
      if (it == lookup.end()) throw Error("invalid_config", "config: unknown key " + section + "." + key);
      if (section == "general" && key == "seed") continue;
      it->second->set(trim(value.data()));
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

}  // namespace genrec
