#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace genrec {

// Every failure surfaced by the library carries a short machine-readable code
// next to the human-readable message. The CLI turns both into one error record.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// splitmix64 finalizer; stateless 64-bit mixer used for all hashed randomness.
constexpr uint64_t mix64(uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

constexpr uint64_t hash_combine(uint64_t a, uint64_t b) noexcept {
  return mix64(a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

constexpr uint64_t fnv1a64(std::string_view bytes) noexcept {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string to_hex(uint64_t value);

/// Portable seeded generator (xoshiro256**). Every random draw in the
/// pipeline goes through this type so artifacts do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next() noexcept;
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept;
  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n);
  double normal() noexcept;

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
};

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);
bool file_exists(const std::string& path);

// Keeps large training buffers in the heap instead of returning them to
// the system after every step. Call once at process start.
void tune_allocator();

// Splits on a single delimiter; keeps empty fields.
std::vector<std::string> split(std::string_view s, char delim);

}  // namespace genrec
