#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "genrec/common.hpp"

// Asserts that `stmt` throws genrec::Error with the given code.
#define EXPECT_GENREC_ERROR(stmt, expected_code)                                   \
  do {                                                                             \
    try {                                                                          \
      stmt;                                                                        \
      ADD_FAILURE() << "expected genrec::Error(" << (expected_code) << ")";        \
    } catch (const genrec::Error& e_) {                                            \
      EXPECT_EQ(e_.code(), (expected_code)) << e_.what();                          \
    }                                                                              \
  } while (0)

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("genrec_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string data_path(const std::string& name) { return std::string(GENREC_TEST_DATA) + "/" + name; }

}  // namespace testutil
