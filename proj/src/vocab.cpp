#include "genrec/vocab.hpp"

#include <cstdio>
#include <unordered_set>

#include "genrec/common.hpp"

namespace genrec {

namespace {
constexpr const char* kVocabHeader = "genrec-vocab v1";
}

Vocab Vocab::byte_level() {
  Vocab v;
  std::vector<std::string> names;
  for (int b = 0; b < kNumBytes; ++b) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "<0x%02X>", b);
    names.emplace_back(buf);
  }
  names.emplace_back(kPadToken);
  names.emplace_back(kBosToken);
  names.emplace_back(kEosToken);
  v.extend(names);
  return v;
}

const std::string& Vocab::name(int id) const {
  if (id < 0 || id >= size()) throw Error("unknown_token", "token id " + std::to_string(id) + " out of range");
  return names_[static_cast<size_t>(id)];
}

int Vocab::id(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) throw Error("unknown_token", "unknown token " + std::string(name));
  return it->second;
}

bool Vocab::contains(std::string_view name) const { return ids_.count(std::string(name)) > 0; }

void Vocab::extend(std::span<const std::string> tokens) {
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens) {
    if (ids_.count(t) || !seen.insert(t).second)
      throw Error("duplicate_token", "token " + t + " already in vocabulary");
  }
  for (const auto& t : tokens) {
    ids_.emplace(t, size());
    names_.push_back(t);
  }
}

std::vector<int> Vocab::encode_text(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<int>(c));
  return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < kNumBytes)
      out.push_back(static_cast<char>(id));
    else
      out += name(id);
  }
  return out;
}

uint64_t Vocab::hash() const {
  uint64_t h = 0x51ED;
  for (const auto& n : names_) h = hash_combine(h, fnv1a64(n));
  return h;
}

std::string Vocab::serialize() const {
  std::string out = std::string(kVocabHeader) + "\n";
  for (const auto& n : names_) out += n + "\n";
  return out;
}

Vocab Vocab::parse(std::string_view text) {
  auto lines = split(text, '\n');
  if (lines.empty() || lines[0] != kVocabHeader) throw Error("format_error", "not a vocabulary file");
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  Vocab v;
  v.extend(std::span<const std::string>(lines).subspan(1));
  return v;
}

}  // namespace genrec
