#include "genrec/synth.hpp"

#include <array>
#include <vector>

#include <nlohmann/json.hpp>

#include "genrec/common.hpp"

namespace genrec {

namespace {

constexpr std::array<const char*, 16> kAdjectives = {"red",   "compact", "classic", "deluxe", "vintage", "soft",
                                                     "bright", "large",  "mini",    "smart",  "quiet",   "rapid",
                                                     "rustic", "silver", "golden",  "urban"};
constexpr std::array<const char*, 16> kNouns = {"lamp",   "kettle", "guitar", "blender", "jacket", "camera",
                                                "puzzle", "wallet", "helmet", "candle",  "speaker", "mug",
                                                "tent",   "brush",  "drone",  "notebook"};
// One theme per cluster: a head noun and two companion words.
constexpr std::array<std::array<const char*, 3>, 16> kThemes = {{{"guitar", "strings", "tuner"},
                                                                  {"lipstick", "matte", "gloss"},
                                                                  {"tent", "camping", "trail"},
                                                                  {"kettle", "kitchen", "brew"},
                                                                  {"novel", "paperback", "chapter"},
                                                                  {"sneaker", "running", "sole"},
                                                                  {"drone", "rotor", "aerial"},
                                                                  {"puzzle", "pieces", "jigsaw"},
                                                                  {"candle", "scented", "wax"},
                                                                  {"helmet", "cycling", "visor"},
                                                                  {"laptop", "keyboard", "screen"},
                                                                  {"blender", "smoothie", "jar"},
                                                                  {"watch", "strap", "dial"},
                                                                  {"wallet", "leather", "card"},
                                                                  {"camera", "lens", "shutter"},
                                                                  {"yoga", "mat", "stretch"}}};

std::string id_of(char prefix, int i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int width_for(int n) {
  int w = 1;
  for (int v = n; v >= 10; v /= 10) ++w;
  return std::max(w, 4);
}

void emit_item(std::string& meta, const std::string& id, const std::string& title) {
  nlohmann::ordered_json j;
  j["item_id"] = id;
  j["title"] = title;
  meta += j.dump() + "\n";
}

void emit_event(std::string& out, const std::string& user, const std::string& item, int t) {
  out += user + "\t" + item + "\t" + std::to_string(t) + "\n";
}

}  // namespace

void SynthConfig::validate() const {
  if (pattern != "chain" && pattern != "clustered")
    throw Error("invalid_config", "unknown synth pattern '" + pattern + "' (chain or clustered)");
  if (min_len < 5 || max_len < min_len) throw Error("invalid_config", "need 5 <= min_len <= max_len");
  if (users < 0) throw Error("invalid_config", "users must be non-negative");
  if (pattern == "chain" && items < max_len) throw Error("invalid_config", "chain needs items >= max_len");
  if (pattern == "clustered") {
    if (clusters < 2 || clusters > static_cast<int>(kThemes.size()))
      throw Error("invalid_config", "clusters must lie in [2, 16]");
    if (blocks < 1 || items_per_cell < 1) throw Error("invalid_config", "blocks and items_per_cell must be positive");
  }
}

SynthCorpus synthesize(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(hash_combine(cfg.seed, 0x5F47));
  SynthCorpus c;
  if (cfg.pattern == "chain") {
    const int n = cfg.items;
    const int w = width_for(n);
    for (int i = 0; i < n; ++i) {
      const std::string title = std::string(kAdjectives[rng.below(kAdjectives.size())]) + " " +
                                kNouns[rng.below(kNouns.size())] + " model " + std::to_string(i);
      emit_item(c.metadata, id_of('i', i, w), title);
    }
    const int users = cfg.users > 0 ? cfg.users : 2 * n;
    const int uw = width_for(users);
    for (int u = 0; u < users; ++u) {
      const int start = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
      const int len = cfg.min_len + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.max_len - cfg.min_len + 1)));
      for (int j = 0; j < len; ++j) emit_event(c.interactions, id_of('u', u, uw), id_of('i', (start + j) % n, w), j);
    }
    return c;
  }

  const int per_cell = cfg.items_per_cell;
  const int n = cfg.clusters * cfg.blocks * per_cell;
  const int w = width_for(n);
  // Item ids are shuffled over cells so ids carry no structure.
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  auto item_at = [&](int cluster, int block, int j) {
    return perm[static_cast<size_t>((cluster * cfg.blocks + block) * per_cell + j)];
  };
  std::vector<std::string> titles(static_cast<size_t>(n));
  for (int cl = 0; cl < cfg.clusters; ++cl)
    for (int b = 0; b < cfg.blocks; ++b)
      for (int j = 0; j < per_cell; ++j) {
        const auto& theme = kThemes[static_cast<size_t>(cl)];
        titles[static_cast<size_t>(item_at(cl, b, j))] = std::string(kAdjectives[rng.below(kAdjectives.size())]) +
                                                         " " + theme[0] + " " + theme[1 + rng.below(2)];
      }
  for (int i = 0; i < n; ++i) emit_item(c.metadata, id_of('i', i, w), titles[static_cast<size_t>(i)]);
  const int users = cfg.users > 0 ? cfg.users : 2 * n;
  const int uw = width_for(users);
  for (int u = 0; u < users; ++u) {
    const int block = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.blocks)));
    const int start = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.clusters)));
    const int len = cfg.min_len + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.max_len - cfg.min_len + 1)));
    for (int j = 0; j < len; ++j) {
      const int cl = (start + j) % cfg.clusters;
      const int pick = static_cast<int>(rng.below(static_cast<uint64_t>(per_cell)));
      emit_event(c.interactions, id_of('u', u, uw), id_of('i', item_at(cl, block, pick), w), j);
    }
  }
  return c;
}

}  // namespace genrec
