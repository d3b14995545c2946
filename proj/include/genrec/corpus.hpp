#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace genrec {

struct Interaction {
  std::string user_id;
  std::string item_id;
  int64_t timestamp = 0;
};

struct ItemRecord {
  std::string item_id;
  std::string title;
  std::string description;
};

// Interaction events in canonical order: users ascending, then per user by
// (timestamp, input order). `items` holds metadata for every referenced item.
struct InteractionLog {
  std::vector<Interaction> events;
  std::map<std::string, ItemRecord> items;

  bool empty() const { return events.empty(); }
  std::vector<std::string> users() const;
  // Sorted ids of items that occur in at least one event.
  std::vector<std::string> item_registry() const;
  std::map<std::string, std::vector<std::string>> sequences() const;
};

struct UserSplit {
  std::string user_id;
  std::vector<std::string> train;
  std::string valid;
  std::string test;
};

struct Splits {
  std::vector<UserSplit> users;  // ascending user_id
};

constexpr int kDefaultMaxHistory = 20;
constexpr int kMinInteractions = 5;

// Interactions: `user<TAB>item<TAB>timestamp` per line.
// Metadata: JSON lines with item_id, title and optional description.
InteractionLog load_corpus(const std::string& interactions_path, const std::string& metadata_path);
InteractionLog parse_corpus(std::string_view interactions, std::string_view metadata);

// Iterated to fixpoint: drops users and items with fewer than `min_count`
// events until none remain.
InteractionLog five_core_filter(const InteractionLog& log, int min_count = kMinInteractions);

Splits leave_one_out_split(const InteractionLog& log);

std::vector<std::string> truncate_history(const std::vector<std::string>& seq,
                                          int max_len = kDefaultMaxHistory);

// History used to predict a held-out target. Test histories include the
// validation item.
std::vector<std::string> eval_history(const UserSplit& split, bool test_mode,
                                      int max_len = kDefaultMaxHistory);

std::string serialize_splits(const Splits& splits, const std::string& fingerprint);
Splits parse_splits(std::string_view text);

std::string serialize_items(const std::map<std::string, ItemRecord>& items,
                            const std::string& fingerprint);
std::map<std::string, ItemRecord> parse_items(std::string_view text);

}  // namespace genrec
