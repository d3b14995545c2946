#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace genrec {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kConToken = "<CON>";

// Dense token-id space: 256 byte tokens, then the base specials, then any
// extension tokens in insertion order. Ids never move once assigned.
class Vocab {
 public:
  // 256 byte tokens named <0xNN> followed by <pad>, <bos>, <eos>.
  static Vocab byte_level();
  static constexpr int kNumBytes = 256;

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  int id(std::string_view name) const;  // throws on unknown names
  bool contains(std::string_view name) const;

  int pad() const { return id(kPadToken); }
  int bos() const { return id(kBosToken); }
  int eos() const { return id(kEosToken); }

  // Appends new tokens; throws on any duplicate (against the vocabulary or
  // within `tokens`) without modifying the vocabulary.
  void extend(std::span<const std::string> tokens);

  std::vector<int> encode_text(std::string_view text) const;
  // Inverse of encode_text for byte tokens; other tokens render by name.
  std::string decode(std::span<const int> ids) const;

  const std::vector<std::string>& names() const { return names_; }
  uint64_t hash() const;

  std::string serialize() const;
  static Vocab parse(std::string_view text);

  bool operator==(const Vocab& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace genrec
