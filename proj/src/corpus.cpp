#include "genrec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "genrec/common.hpp"

namespace genrec {

namespace {

using json = nlohmann::json;

constexpr const char* kSplitsFormat = "genrec-splits";
constexpr const char* kItemsFormat = "genrec-items";
constexpr int kFormatVersion = 1;

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  size_t line_no = 0;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(line_no, strip_cr(text.substr(start, end - start)));
    start = end + 1;
  }
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
}

[[noreturn]] void malformed(const std::string& file, size_t line_no, const std::string& why) {
  throw Error("parse_error", file + ":" + std::to_string(line_no) + ": " + why);
}

// Sorts events into canonical order. The input order is the tie-break for
// equal timestamps.
void canonicalize(std::vector<Interaction>& events) {
  std::stable_sort(events.begin(), events.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.timestamp < b.timestamp;
  });
}

json header(const char* format, const std::string& fingerprint) {
  return json{{"format", format}, {"version", kFormatVersion}, {"fingerprint", fingerprint}};
}

void check_header(const json& h, const char* format) {
  if (!h.is_object() || h.value("format", "") != format)
    throw Error("format_error", std::string("expected a ") + format + " header");
  if (h.value("version", 0) != kFormatVersion)
    throw Error("format_error", std::string(format) + ": unsupported version");
}

}  // namespace

std::vector<std::string> InteractionLog::users() const {
  std::vector<std::string> out;
  for (const auto& e : events)
    if (out.empty() || out.back() != e.user_id) out.push_back(e.user_id);
  return out;
}

std::vector<std::string> InteractionLog::item_registry() const {
  std::set<std::string> ids;
  for (const auto& e : events) ids.insert(e.item_id);
  return {ids.begin(), ids.end()};
}

std::map<std::string, std::vector<std::string>> InteractionLog::sequences() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& e : events) out[e.user_id].push_back(e.item_id);
  return out;
}

InteractionLog parse_corpus(std::string_view interactions, std::string_view metadata) {
  InteractionLog log;
  for_each_line(interactions, [&](size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    auto fields = split(line, '\t');
    if (fields.size() != 3) malformed("interactions", line_no, "expected 3 tab-separated fields");
    if (fields[0].empty() || fields[1].empty())
      malformed("interactions", line_no, "empty user or item id");
    int64_t ts = 0;
    const auto& f = fields[2];
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
    if (ec != std::errc() || ptr != f.data() + f.size())
      malformed("interactions", line_no, "timestamp is not an integer");
    log.events.push_back({std::move(fields[0]), std::move(fields[1]), ts});
  });
  canonicalize(log.events);

  std::map<std::string, ItemRecord> meta;
  for_each_line(metadata, [&](size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      malformed("metadata", line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("item_id") || !rec["item_id"].is_string())
      malformed("metadata", line_no, "missing string field item_id");
    if (!rec.contains("title") || !rec["title"].is_string())
      malformed("metadata", line_no, "missing string field title");
    ItemRecord item;
    item.item_id = rec["item_id"].get<std::string>();
    item.title = rec["title"].get<std::string>();
    if (rec.contains("description")) {
      if (!rec["description"].is_string())
        malformed("metadata", line_no, "description must be a string");
      item.description = rec["description"].get<std::string>();
    }
    if (meta.count(item.item_id)) malformed("metadata", line_no, "duplicate item_id " + item.item_id);
    meta.emplace(item.item_id, std::move(item));
  });

  std::vector<std::string> missing;
  for (const auto& id : log.item_registry()) {
    auto it = meta.find(id);
    if (it == meta.end()) {
      missing.push_back(id);
      continue;
    }
    if (it->second.title.empty()) throw Error("missing_metadata", "item " + id + " has an empty title");
    log.items.emplace(id, it->second);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error("missing_metadata", "items without metadata: " + list);
  }
  return log;
}

InteractionLog load_corpus(const std::string& interactions_path, const std::string& metadata_path) {
  return parse_corpus(read_file(interactions_path), read_file(metadata_path));
}

InteractionLog five_core_filter(const InteractionLog& log, int min_count) {
  std::vector<Interaction> events = log.events;
  while (true) {
    std::unordered_map<std::string, int> user_count, item_count;
    for (const auto& e : events) {
      ++user_count[e.user_id];
      ++item_count[e.item_id];
    }
    std::vector<Interaction> kept;
    kept.reserve(events.size());
    for (auto& e : events)
      if (user_count[e.user_id] >= min_count && item_count[e.item_id] >= min_count)
        kept.push_back(std::move(e));
    const bool changed = kept.size() != events.size();
    events = std::move(kept);
    if (!changed) break;
  }
  InteractionLog out;
  out.events = std::move(events);
  for (const auto& id : out.item_registry()) {
    auto it = log.items.find(id);
    if (it != log.items.end()) out.items.emplace(id, it->second);
  }
  return out;
}

Splits leave_one_out_split(const InteractionLog& log) {
  Splits splits;
  for (auto& [user, seq] : log.sequences()) {
    if (seq.size() < 3)
      throw Error("too_few_events", "user " + user + " has " + std::to_string(seq.size()) +
                                        " events; leave-one-out needs at least 3");
    UserSplit s;
    s.user_id = user;
    s.test = seq.back();
    s.valid = seq[seq.size() - 2];
    s.train.assign(seq.begin(), seq.end() - 2);
    splits.users.push_back(std::move(s));
  }
  return splits;
}

std::vector<std::string> truncate_history(const std::vector<std::string>& seq, int max_len) {
  if (max_len < 1) throw Error("invalid_argument", "max_len must be at least 1");
  if (seq.size() <= static_cast<size_t>(max_len)) return seq;
  return {seq.end() - max_len, seq.end()};
}

std::vector<std::string> eval_history(const UserSplit& split, bool test_mode, int max_len) {
  std::vector<std::string> h = split.train;
  if (test_mode) h.push_back(split.valid);
  return truncate_history(h, max_len);
}

std::string serialize_splits(const Splits& splits, const std::string& fingerprint) {
  std::string out = header(kSplitsFormat, fingerprint).dump() + "\n";
  for (const auto& u : splits.users) {
    json rec{{"user", u.user_id}, {"train", u.train}, {"valid", u.valid}, {"test", u.test}};
    out += rec.dump() + "\n";
  }
  return out;
}

Splits parse_splits(std::string_view text) {
  Splits splits;
  bool first = true;
  for_each_line(text, [&](size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      malformed("splits", line_no, e.what());
    }
    if (first) {
      check_header(rec, kSplitsFormat);
      first = false;
      return;
    }
    UserSplit u;
    u.user_id = rec.at("user").get<std::string>();
    u.train = rec.at("train").get<std::vector<std::string>>();
    u.valid = rec.at("valid").get<std::string>();
    u.test = rec.at("test").get<std::string>();
    splits.users.push_back(std::move(u));
  });
  if (first) throw Error("format_error", "splits file has no header");
  return splits;
}

std::string serialize_items(const std::map<std::string, ItemRecord>& items,
                            const std::string& fingerprint) {
  std::string out = header(kItemsFormat, fingerprint).dump() + "\n";
  for (const auto& [id, item] : items) {
    json rec{{"item_id", id}, {"title", item.title}, {"description", item.description}};
    out += rec.dump() + "\n";
  }
  return out;
}

std::map<std::string, ItemRecord> parse_items(std::string_view text) {
  std::map<std::string, ItemRecord> items;
  bool first = true;
  for_each_line(text, [&](size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      malformed("items", line_no, e.what());
    }
    if (first) {
      check_header(rec, kItemsFormat);
      first = false;
      return;
    }
    ItemRecord item{rec.at("item_id").get<std::string>(), rec.at("title").get<std::string>(),
                    rec.value("description", "")};
    items.emplace(item.item_id, std::move(item));
  });
  if (first) throw Error("format_error", "items file has no header");
  return items;
}

}  // namespace genrec
